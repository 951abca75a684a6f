#pragma once

#include "heintfl/tensor.hpp"

namespace heintfl::attack {

// Full-reference image similarity metrics over (C,H,W) tensors with values
// in [0,1]. Channels are scored independently and averaged.

// Universal quality index, 8x8 sliding windows at stride 1 (window clamped
// to the image when smaller). Windows with a zero denominator contribute 1
// when the two windows are identical and are skipped otherwise.
// Range [-1, 1]; identical images give exactly 1.
double uqi(const Tensor& a, const Tensor& b);

struct MsssimOptions {
  int scales = 0;      // 0 = pick from image size (3 for 32x32, 2 for 8x8)
  int window = 11;     // Gaussian window, clamped to the image per scale
  double k1 = 0.01;
  double k2 = 0.03;
};

// Multi-scale structural similarity: per-scale contrast-structure terms and
// a final-scale luminance term, standard exponents renormalized over the
// scales used. 2x2 mean pooling between scales. Throws when the image is too
// small for at least two scales. Identical images give exactly 1.
double msssim(const Tensor& a, const Tensor& b, const MsssimOptions& opts = {});

struct VifOptions {
  int scales = 4;          // capped by image size
  double noise_var = 2.0;  // HVS noise variance on the 0..255 convention
};

// Pixel-domain visual information fidelity (multi-scale Gaussian variant):
// ratio of distorted-image to reference-image information under the
// scalar-GSM model. Inputs in [0,1] are scaled to the 0..255 convention the
// standard noise variance assumes. Clamped to >= 0; vif(x,x) == 1 exactly.
// Throws when the reference carries no variance at any scale.
double vif(const Tensor& reference, const Tensor& distorted, const VifOptions& opts = {});

}  // namespace heintfl::attack
