#ifndef DFM_FRF_HPP_
#define DFM_FRF_HPP_

#include "dfm/direction_field.hpp"
#include "dfm/tensor.hpp"

namespace dfm {

/// Feature rectification along a direction field followed by fusion.
///
/// Each step replaces the feature at p with the bilinearly interpolated
/// feature at p + DF(p); the same displacement is reused at every step.
/// Sample positions outside the image are clamped to [0, W-1] x [0, H-1].

struct FrfConfig {
  int steps = 5;
};

/// Bilinear sampling of every channel of `features` (C×H×W) at absolute
/// positions `coords` (2×H×W; channel 0 = x, channel 1 = y).
FeatureMap bilinear_sample(const FeatureMap& features, const Tensor& coords);

struct BilinearSampleGrad {
  FeatureMap features;  // C×H×W
  Tensor coords;        // 2×H×W
};

BilinearSampleGrad bilinear_sample_backward(const FeatureMap& features, const Tensor& coords,
                                            const FeatureMap& grad_output);

/// One rectification step: out(p) = prev(p + df(p)).
FeatureMap frf_step(const FeatureMap& prev, const DirectionField& df);

/// `cfg.steps` rectification steps; zero steps returns f0 unchanged.
FeatureMap frf_rectify(const FeatureMap& f0, const DirectionField& df, const FrfConfig& cfg);

struct FrfGrad {
  FeatureMap features;  // dL/dF0
  Tensor field;         // dL/dDF, 2×H×W
};

/// Gradient of a scalar loss through frf_rectify given dL/dF^N.
FrfGrad frf_rectify_backward(const FeatureMap& f0, const DirectionField& df,
                             const FrfConfig& cfg, const FeatureMap& grad_output);

/// Channel concatenation [fN; f0] (2C×H×W).
FeatureMap frf_fuse(const FeatureMap& f0, const FeatureMap& fN);

}  // namespace dfm

#endif  // DFM_FRF_HPP_
