#ifndef DFM_LOSSES_HPP_
#define DFM_LOSSES_HPP_

#include <vector>

#include "dfm/direction_field.hpp"
#include "dfm/label_mask.hpp"
#include "dfm/tensor.hpp"

namespace dfm {

struct LossConfig {
  double alpha = 1.0;           // weight of the squared angle term
  double lambda_df = 1.0;       // weight of the direction-field loss in the total
  double epsilon_acos = 1e-7;   // cosine is clamped to [-1 + eps, 1 - eps]
  bool squared_l2 = false;      // use ||gt - pred||^2 instead of ||gt - pred||

  void validate() const;
};

/// Per-pixel weights: (sum_j |C_j|) / (N_cls * |C_i|) on class i, 1 on
/// background. Sums and N_cls range over foreground classes present in the
/// mask.
struct WeightMap {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  double at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

WeightMap class_balance_weights(const LabelMask& mask);

struct LossGrad {
  double value = 0.0;
  Tensor grad;  // same shape as the differentiated input
};

/// Mean over pixels of -log softmax(logits)[gt]. `logits` is (K+1)×H×W.
double cross_entropy(const Tensor& logits, const LabelMask& gt);
LossGrad cross_entropy_with_grad(const Tensor& logits, const LabelMask& gt);

struct DirectionFieldLossTerms {
  double l2 = 0.0;     // mean of w * ||gt - pred||
  double angle = 0.0;  // mean of w * alpha * acos(<n(pred), gt>)^2 over gt-foreground
  double total() const { return l2 + angle; }
};

/// Weighted L2 + squared-angle direction-field loss, averaged over all H*W
/// pixels. The angle term only sees pixels where gt is non-zero.
DirectionFieldLossTerms direction_field_loss_terms(const Tensor& pred, const DirectionField& gt,
                                                   const WeightMap& weights,
                                                   const LossConfig& cfg);
double direction_field_loss(const Tensor& pred, const DirectionField& gt,
                            const WeightMap& weights, const LossConfig& cfg);
LossGrad direction_field_loss_with_grad(const Tensor& pred, const DirectionField& gt,
                                        const WeightMap& weights, const LossConfig& cfg);

/// ce_initial + ce_final + lambda_df * df_loss
double total_loss(double ce_initial, double ce_final, double df_loss, const LossConfig& cfg);

}  // namespace dfm

#endif  // DFM_LOSSES_HPP_
