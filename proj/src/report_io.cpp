#include "cbmloc/report_io.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace cbmloc {

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string metric_report_csv(const MetricReport& report, std::uint64_t seed, const std::string& model_id) {
  std::ostringstream os;
  os << "metric,concept_index,per_concept_value,n_samples,n_excluded,seed,model_id\n";
  std::size_t samples = 0;
  for (std::size_t j = 0; j < report.per_concept.size(); ++j) {
    os << csv_field(report.metric_name) << ',' << j << ',' << format_real(report.per_concept[j]) << ','
       << report.n_samples[j] << ',' << report.n_excluded[j] << ',' << seed << ',' << csv_field(model_id) << '\n';
    samples += report.n_samples[j];
  }
  os << csv_field(report.metric_name) << ",mean," << format_real(report.mean) << ',' << samples << ','
     << report.total_excluded() << ',' << seed << ',' << csv_field(model_id) << '\n';
  return os.str();
}

std::string metric_report_json(const MetricReport& report, std::uint64_t seed, const std::string& model_id,
                               bool include_records) {
  nlohmann::json j = {{"metric", report.metric_name},
                      {"mean", report.mean},
                      {"per_concept", report.per_concept},
                      {"n_samples", report.n_samples},
                      {"n_excluded", report.n_excluded},
                      {"seed", seed},
                      {"model_id", model_id}};
  if (include_records) {
    auto& recs = j["records"] = nlohmann::json::array();
    for (const auto& r : report.records)
      recs.push_back({{"sample", r.sample}, {"concept", r.concept_index}, {"value", r.value}, {"witness", r.witness}});
  }
  return j.dump(2);
}

std::string history_csv(const std::vector<EpochStats>& history) {
  std::ostringstream os;
  os << "epoch,loss,concept_acc,task_acc\n";
  for (const auto& e : history)
    os << e.epoch << ',' << format_real(e.loss) << ',' << format_real(e.concept_accuracy) << ','
       << format_real(e.task_accuracy) << '\n';
  return os.str();
}

}  // namespace cbmloc
