#pragma once

#include "dseg/core.hpp"

#include <cstdint>

namespace dseg {

struct Rgb8Image {
  using Plane = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;
  Plane r, g, b;  // each height x width

  int width() const { return static_cast<int>(r.cols()); }
  int height() const { return static_cast<int>(r.rows()); }

  static Rgb8Image zero(int height, int width) {
    Rgb8Image img;
    img.r = Plane::Zero(height, width);
    img.g = Plane::Zero(height, width);
    img.b = Plane::Zero(height, width);
    return img;
  }
};

}  // namespace dseg
