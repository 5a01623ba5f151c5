#include "dfm/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dfm {
namespace {

constexpr double kNormGuard = 1e-8;

void check_logits(const Tensor& logits, const LabelMask& gt) {
  if (logits.rank() != 3 || logits.dim(1) != gt.height() || logits.dim(2) != gt.width()) {
    throw std::invalid_argument("logits " + logits.shape_string() +
                                " do not match label mask " + std::to_string(gt.height()) +
                                "x" + std::to_string(gt.width()));
  }
  const int k = logits.dim(0) - 1;
  for (std::int32_t v : gt.labels()) {
    if (v < 0 || v > k) {
      throw std::invalid_argument("label " + std::to_string(v) + " outside [0, " +
                                  std::to_string(k) + "]");
    }
  }
}

void check_field_pair(const Tensor& pred, const DirectionField& gt, const WeightMap& w) {
  if (pred.rank() != 3 || pred.dim(0) != 2 || pred.dim(1) != gt.height() ||
      pred.dim(2) != gt.width()) {
    throw std::invalid_argument("predicted field " + pred.shape_string() +
                                " does not match ground truth " +
                                gt.tensor().shape_string());
  }
  if (w.height != gt.height() || w.width != gt.width()) {
    throw std::invalid_argument("weight map does not match field shape");
  }
}

// Shared forward/backward for the direction-field loss.
DirectionFieldLossTerms df_loss_impl(const Tensor& pred, const DirectionField& gt,
                                     const WeightMap& weights, const LossConfig& cfg,
                                     Tensor* grad) {
  cfg.validate();
  check_field_pair(pred, gt, weights);
  const int h = gt.height(), w = gt.width();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const double inv_n = 1.0 / static_cast<double>(plane);
  const double lo = -1.0 + cfg.epsilon_acos;
  const double hi = 1.0 - cfg.epsilon_acos;
  const float* px = pred.data();
  const float* py = pred.data() + plane;
  const float* gx = gt.tensor().data();
  const float* gy = gt.tensor().data() + plane;
  float* dx_out = grad ? grad->data() : nullptr;
  float* dy_out = grad ? grad->data() + plane : nullptr;

  DirectionFieldLossTerms terms;
  for (std::size_t i = 0; i < plane; ++i) {
    const double wp = weights.data[i];
    const double ax = px[i], ay = py[i];
    const double bx = gx[i], by = gy[i];
    double gpx = 0.0, gpy = 0.0;

    const double ex = ax - bx, ey = ay - by;
    const double dist = std::sqrt(ex * ex + ey * ey);
    if (cfg.squared_l2) {
      terms.l2 += wp * dist * dist;
      gpx += 2.0 * wp * ex;
      gpy += 2.0 * wp * ey;
    } else {
      terms.l2 += wp * dist;
      if (dist >= kNormGuard) {
        gpx += wp * ex / dist;
        gpy += wp * ey / dist;
      }
    }

    if (bx != 0.0 || by != 0.0) {
      const double norm = std::sqrt(ax * ax + ay * ay);
      const double scale = std::max(norm, kNormGuard);
      const double nx = ax / scale, ny = ay / scale;
      const double cos_raw = nx * bx + ny * by;
      const double cos_c = std::clamp(cos_raw, lo, hi);
      const double theta = std::acos(cos_c);
      terms.angle += wp * cfg.alpha * theta * theta;
      if (cos_raw > lo && cos_raw < hi) {
        // d(theta^2)/dcos = -2 theta / sqrt(1 - cos^2)
        const double dcos = -2.0 * theta / std::sqrt(1.0 - cos_c * cos_c);
        double dnx = bx, dny = by;  // d cos / d n
        if (norm >= kNormGuard) {
          // Project out the radial component: d n / d a = (I - n n^T) / |a|.
          dnx = (bx - cos_raw * nx) / norm;
          dny = (by - cos_raw * ny) / norm;
        } else {
          dnx /= kNormGuard;
          dny /= kNormGuard;
        }
        gpx += wp * cfg.alpha * dcos * dnx;
        gpy += wp * cfg.alpha * dcos * dny;
      }
    }

    if (grad) {
      dx_out[i] = static_cast<float>(gpx * inv_n);
      dy_out[i] = static_cast<float>(gpy * inv_n);
    }
  }
  terms.l2 *= inv_n;
  terms.angle *= inv_n;
  return terms;
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  if (!(lambda_df >= 0.0)) throw std::invalid_argument("lambda_df must be >= 0");
  if (!(epsilon_acos > 0.0 && epsilon_acos < 1e-3)) {
    throw std::invalid_argument("epsilon_acos must lie in (0, 1e-3)");
  }
}

WeightMap class_balance_weights(const LabelMask& mask) {
  WeightMap w{mask.height(), mask.width(), std::vector<double>(mask.size(), 1.0)};
  const auto counts = mask.class_counts();
  const auto present = mask.present_foreground();
  if (present.empty()) return w;
  double total = 0.0;
  for (int c : present) total += static_cast<double>(counts[static_cast<std::size_t>(c)]);
  const double n_cls = static_cast<double>(present.size());
  std::vector<double> per_class(counts.size(), 1.0);
  for (int c : present) {
    per_class[static_cast<std::size_t>(c)] =
        total / (n_cls * static_cast<double>(counts[static_cast<std::size_t>(c)]));
  }
  const auto labels = mask.labels();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    w.data[i] = per_class[static_cast<std::size_t>(labels[i])];
  }
  return w;
}

LossGrad cross_entropy_with_grad(const Tensor& logits, const LabelMask& gt) {
  check_logits(logits, gt);
  const int channels = logits.dim(0);
  const std::size_t plane = gt.size();
  const double inv_n = 1.0 / static_cast<double>(plane);
  const auto labels = gt.labels();
  LossGrad out{0.0, Tensor(logits.shape())};
  std::vector<double> prob(static_cast<std::size_t>(channels));
  for (std::size_t i = 0; i < plane; ++i) {
    double mx = logits[i];
    for (int c = 1; c < channels; ++c) mx = std::max(mx, static_cast<double>(logits[c * plane + i]));
    double sum = 0.0;
    for (int c = 0; c < channels; ++c) {
      prob[static_cast<std::size_t>(c)] = std::exp(logits[c * plane + i] - mx);
      sum += prob[static_cast<std::size_t>(c)];
    }
    const int t = labels[i];
    out.value += -(logits[static_cast<std::size_t>(t) * plane + i] - mx - std::log(sum));
    for (int c = 0; c < channels; ++c) {
      const double p = prob[static_cast<std::size_t>(c)] / sum;
      out.grad[c * plane + i] = static_cast<float>((p - (c == t ? 1.0 : 0.0)) * inv_n);
    }
  }
  out.value *= inv_n;
  return out;
}

double cross_entropy(const Tensor& logits, const LabelMask& gt) {
  return cross_entropy_with_grad(logits, gt).value;
}

DirectionFieldLossTerms direction_field_loss_terms(const Tensor& pred, const DirectionField& gt,
                                                   const WeightMap& weights,
                                                   const LossConfig& cfg) {
  return df_loss_impl(pred, gt, weights, cfg, nullptr);
}

double direction_field_loss(const Tensor& pred, const DirectionField& gt,
                            const WeightMap& weights, const LossConfig& cfg) {
  return df_loss_impl(pred, gt, weights, cfg, nullptr).total();
}

LossGrad direction_field_loss_with_grad(const Tensor& pred, const DirectionField& gt,
                                        const WeightMap& weights, const LossConfig& cfg) {
  LossGrad out{0.0, Tensor(pred.shape())};
  out.value = df_loss_impl(pred, gt, weights, cfg, &out.grad).total();
  return out;
}

double total_loss(double ce_initial, double ce_final, double df_loss, const LossConfig& cfg) {
  return ce_initial + ce_final + cfg.lambda_df * df_loss;
}

}  // namespace dfm
