#pragma once

#include <string>
#include <vector>

#include "lprune/model.hpp"

namespace lprune {

// Bundled 1-d architectures for I/Q input (2 channels). Parameters are
// zero-filled; call kaiming_init_model before use.
//
//   tiny4    4 plain conv units, for fast tests
//   vgg8     8 plain conv units (conv + BN + ReLU each), strided at 2/4/6
//   resnet10 conv stem + 4 residual blocks
ModelGraph make_preset(const std::string& name, int num_classes);

std::vector<std::string> preset_names();

}  // namespace lprune
