#include <algorithm>
#include <cmath>

#include "dfds/dfds.hpp"
#include "dfds/error.hpp"

namespace dfds::model {

double bce_loss(std::span<const double> preds, std::span<const std::uint8_t> targets) {
  if (preds.size() != targets.size()) {
    throw ShapeError("bce_loss: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(targets.size()) + " targets");
  }
  if (preds.empty()) throw ShapeError("bce_loss: empty input");
  double total = 0.0;
  for (std::size_t t = 0; t < preds.size(); ++t) {
    const double p = std::clamp(preds[t], kProbabilityClamp, 1.0 - kProbabilityClamp);
    total -= targets[t] ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(preds.size());
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::none:
      return "full";
    case Ablation::drop_dynamic_component:
      return "drop_dynamic_component";
    case Ablation::drop_static_component:
      return "drop_static_component";
    case Ablation::drop_occupation:
      return "drop_occupation";
    case Ablation::drop_day_of_week:
      return "drop_day_of_week";
    case Ablation::drop_time_of_day:
      return "drop_time_of_day";
    case Ablation::drop_mean:
      return "drop_mean";
    case Ablation::drop_q25:
      return "drop_q25";
    case Ablation::drop_q75:
      return "drop_q75";
  }
  return "unknown";
}

Ablation parse_ablation(std::string_view name) {
  if (name == "full" || name == "none") return Ablation::none;
  for (Ablation a : kAllAblations) {
    if (to_string(a) == name) return a;
  }
  throw UsageError("unknown ablation '" + std::string(name) + "'");
}

DfdsConfig DfdsConfig::with_ablation(DfdsConfig cfg, Ablation a) {
  switch (a) {
    case Ablation::none:
      break;
    case Ablation::drop_dynamic_component:
      cfg.use_encoder = false;
      break;
    case Ablation::drop_static_component:
      cfg.use_static = {false, false, false};
      break;
    case Ablation::drop_occupation:
      cfg.use_occupation = false;
      break;
    case Ablation::drop_day_of_week:
      cfg.use_weekday = false;
      break;
    case Ablation::drop_time_of_day:
      cfg.use_time_of_day = false;
      break;
    case Ablation::drop_mean:
      cfg.use_static[0] = false;
      break;
    case Ablation::drop_q25:
      cfg.use_static[1] = false;
      break;
    case Ablation::drop_q75:
      cfg.use_static[2] = false;
      break;
  }
  return cfg;
}

int DfdsConfig::dynamic_dim() const {
  return (use_occupation ? 1 : 0) + (use_weekday ? 7 : 0) + (use_time_of_day ? 28 : 0);
}

int DfdsConfig::static_count() const {
  return static_cast<int>(std::count(use_static.begin(), use_static.end(), true));
}

int DfdsConfig::fusion_width() const {
  return (use_encoder ? d_encoder : 0) + static_count() * d_static;
}

void DfdsConfig::validate() const {
  if (input_len < 1 || output_len < 1) throw ShapeError("DFDS: horizons must be >= 1");
  if (d_encoder < 1 || d_static < 1 || d_fusion < 1 || d_decoder < 1) {
    throw ShapeError("DFDS: hidden sizes must be >= 1");
  }
  if (d_fusion != d_decoder) {
    throw ShapeError("DFDS: d_fusion (" + std::to_string(d_fusion) +
                     ") must equal d_decoder (" + std::to_string(d_decoder) + ")");
  }
  if (use_encoder && dynamic_dim() == 0) throw ShapeError("DFDS: encoder has no input features");
  if (fusion_width() == 0) throw ShapeError("DFDS: fusion layer has no inputs");
}

}  // namespace dfds::model
