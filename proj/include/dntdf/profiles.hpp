#pragma once

// Encoder profiles: the five-stage depth contract every backbone exposes to
// the decoder. Stage i emits E_i with d_i channels at 1/2^i of the input
// resolution. Only the tiny profile is trainable here; resnet50 carries its
// full convolutional structure for cost accounting, and the efficientnet
// profiles carry the stage contract alone (their internals are not modeled,
// so encoder cost is unavailable for them).

#include <array>
#include <string>

#include "dntdf/tensor.hpp"

namespace dntdf {

struct BackboneProfile {
  std::string name;
  std::array<int, 5> depths{};  // d_1..d_5
  bool trainable = false;       // parameters can be allocated and trained
  bool encoder_modeled = true;  // encoder layer structure present in graphs

  int depth(int i) const {  // 1-based stage index
    require(i >= 1 && i <= 5, "profile: stage index ", i, " out of range");
    return depths[std::size_t(i - 1)];
  }
};

inline BackboneProfile tiny_profile(
    std::array<int, 5> widths = {8, 16, 32, 64, 128}) {
  for (int d : widths) require(d >= 1, "tiny profile: width must be >= 1");
  return BackboneProfile{"tiny", widths, /*trainable=*/true,
                         /*encoder_modeled=*/true};
}

inline BackboneProfile resnet50_profile() {
  return BackboneProfile{"resnet50",
                         {64, 256, 512, 1024, 2048},
                         /*trainable=*/false,
                         /*encoder_modeled=*/true};
}

inline BackboneProfile efficientnet_b0_profile() {
  return BackboneProfile{"efficientnet-b0",
                         {16, 24, 40, 112, 320},
                         /*trainable=*/false,
                         /*encoder_modeled=*/false};
}

inline BackboneProfile efficientnet_b3_profile() {
  return BackboneProfile{"efficientnet-b3",
                         {24, 32, 48, 136, 384},
                         /*trainable=*/false,
                         /*encoder_modeled=*/false};
}

inline BackboneProfile profile_by_name(const std::string& name) {
  if (name == "tiny") return tiny_profile();
  if (name == "resnet50") return resnet50_profile();
  if (name == "efficientnet-b0") return efficientnet_b0_profile();
  if (name == "efficientnet-b3") return efficientnet_b3_profile();
  fail("unknown backbone profile '", name,
       "' (expected tiny, resnet50, efficientnet-b0, efficientnet-b3)");
}

}  // namespace dntdf
