#pragma once

#include "heintfl/tensor.hpp"

namespace heintfl::data {

// One training sample: pixel tensor (C,H,W) with values in [0,1] and a class id.
struct LabeledImage {
  Tensor pixels;
  int label = 0;
};

}  // namespace heintfl::data
