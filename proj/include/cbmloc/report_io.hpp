#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbmloc/metrics.hpp"
#include "cbmloc/train.hpp"

namespace cbmloc {

/// Shortest-safe round-trip formatting: 17 significant digits; NaN -> "nan".
std::string format_real(double v);

/// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(const std::string& s);

/// Header: metric,concept_index,per_concept_value,n_samples,n_excluded,seed,model_id
/// One row per concept, then a row with concept_index "mean".
std::string metric_report_csv(const MetricReport& report, std::uint64_t seed, const std::string& model_id);

std::string metric_report_json(const MetricReport& report, std::uint64_t seed, const std::string& model_id,
                               bool include_records = false);

/// Header: epoch,loss,concept_acc,task_acc
std::string history_csv(const std::vector<EpochStats>& history);

}  // namespace cbmloc
