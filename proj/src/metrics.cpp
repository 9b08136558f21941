#include "dfds/metrics.hpp"

#include <cstdio>
#include <ostream>
#include <sstream>

#include "dfds/error.hpp"

namespace dfds::metrics {

Confusion& Confusion::operator+=(const Confusion& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

Confusion confusion(std::span<const double> preds, std::span<const std::uint8_t> targets,
                    double threshold) {
  if (preds.size() != targets.size()) {
    throw DataError("confusion: " + std::to_string(preds.size()) + " predictions for " +
                    std::to_string(targets.size()) + " targets");
  }
  Confusion c;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const bool predicted = preds[k] >= threshold;
    const bool actual = targets[k] != 0;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

Prf prf(const Confusion& c) {
  Prf out;
  const auto ratio = [&](std::int64_t num, std::int64_t den) {
    if (den == 0) {
      out.degenerate = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  out.precision = ratio(c.tp, c.tp + c.fp);
  out.recall = ratio(c.tp, c.tp + c.fn);
  const double sum = out.precision + out.recall;
  if (sum == 0.0) {
    out.degenerate = true;
    out.f1 = 0.0;
  } else {
    out.f1 = 2.0 * out.precision * out.recall / sum;
  }
  return out;
}

MetricsReport macro_average(std::vector<SetMetrics> per_set) {
  if (per_set.empty()) throw DataError("macro_average: no test sets");
  MetricsReport report;
  for (const auto& s : per_set) {
    report.macro.precision += s.scores.precision;
    report.macro.recall += s.scores.recall;
    report.macro.f1 += s.scores.f1;
    report.macro.degenerate = report.macro.degenerate || s.scores.degenerate;
  }
  const auto n = static_cast<double>(per_set.size());
  report.macro.precision /= n;
  report.macro.recall /= n;
  report.macro.f1 /= n;
  report.per_test_set = std::move(per_set);
  return report;
}

void write_report(std::ostream& out, const MetricsReport& report) {
  char buf[128];
  out << "test_set,precision,recall,f1,tp,fp,fn,tn\n";
  for (const auto& s : report.per_test_set) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", s.scores.precision, s.scores.recall,
                  s.scores.f1);
    out << s.name << ',' << buf << ',' << s.counts.tp << ',' << s.counts.fp << ','
        << s.counts.fn << ',' << s.counts.tn << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", report.macro.precision,
                report.macro.recall, report.macro.f1);
  out << "macro," << buf << ",,,,\n";
}

std::string report_csv(const MetricsReport& report) {
  std::ostringstream out;
  write_report(out, report);
  return out.str();
}

}  // namespace dfds::metrics
