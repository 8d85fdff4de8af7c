#include "hfz/errors.hpp"
#include "hfz/eval.hpp"

#include <cstdio>
#include <fstream>

namespace hfz {
namespace {

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::string rates_csv(const ExperimentReport& report) {
  std::string out = "run,seed";
  for (auto k : kAllClassifiers) out += "," + to_string(k);
  out += "\n";
  for (std::size_t r = 0; r < report.runs.size(); ++r) {
    const RunResult& run = report.runs[r];
    out += std::to_string(r) + "," + std::to_string(run.seed);
    for (double rate : run.rates) out += "," + fixed(rate);
    out += "\n";
  }
  return out;
}

std::string summary_csv(const ExperimentReport& report) {
  std::string out = "classifier,mean,stddev,q1,median,q3,min,max\n";
  for (std::size_t c = 0; c < kClassifierCount; ++c) {
    const SummaryStats& s = report.summary[c];
    out += to_string(kAllClassifiers[c]) + "," + fixed(s.mean) + "," + fixed(s.stddev) + "," +
           fixed(s.q1) + "," + fixed(s.median) + "," + fixed(s.q3) + "," + fixed(s.min) + "," +
           fixed(s.max) + "\n";
  }
  return out;
}

std::string confusion_csv(const Eigen::MatrixXd& cm, const std::vector<std::string>& class_names) {
  std::string out = "target\\estimated";
  for (const auto& name : class_names) out += "," + name;
  out += "\n";
  for (Index r = 0; r < cm.rows(); ++r) {
    out += r < static_cast<Index>(class_names.size()) ? class_names[r] : std::to_string(r);
    for (Index c = 0; c < cm.cols(); ++c) out += "," + fixed(cm(r, c));
    out += "\n";
  }
  return out;
}

std::string report_text(const ExperimentReport& report) {
  std::string out = "# recognition rates per run\n" + rates_csv(report) + "\n# summary\n" +
                    summary_csv(report);
  for (std::size_t c = 0; c < kClassifierCount; ++c) {
    out += "\n# mean confusion matrix (row-normalized): " + to_string(kAllClassifiers[c]) + "\n";
    out += confusion_csv(report.mean_confusion[c], report.class_names);
  }
  return out;
}

void write_report(const ExperimentReport& report, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  write_file(directory / "rates.csv", rates_csv(report));
  write_file(directory / "summary.csv", summary_csv(report));
  for (std::size_t c = 0; c < kClassifierCount; ++c) {
    write_file(directory / ("confusion_" + to_string(kAllClassifiers[c]) + ".csv"),
               confusion_csv(report.mean_confusion[c], report.class_names));
  }
  write_file(directory / "report.txt", report_text(report));
}

}  // namespace hfz
