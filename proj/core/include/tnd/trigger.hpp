#pragma once

#include <array>
#include <cstddef>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "tnd/tensor.hpp"

namespace tnd {

enum class TriggerShape { dot, cross, triangle, square, watermark };

std::string to_string(TriggerShape shape);
TriggerShape trigger_shape_from_string(const std::string& name);

struct PixelBox {
  std::size_t row_begin = 0;
  std::size_t row_end = 0;  // exclusive
  std::size_t col_begin = 0;
  std::size_t col_end = 0;  // exclusive

  std::size_t area() const noexcept { return (row_end - row_begin) * (col_end - col_begin); }
  bool contains(std::size_t row, std::size_t col) const noexcept {
    return row >= row_begin && row < row_end && col >= col_begin && col < col_end;
  }
};

/// Parameters that fully determine a stamp. The mask and pattern are rebuilt from these.
struct TriggerParams {
  TriggerShape shape = TriggerShape::square;
  std::size_t center_row = 0;
  std::size_t center_col = 0;
  std::size_t side = 3;
  std::array<double, 3> color{255.0, 255.0, 255.0};

  friend bool operator==(const TriggerParams&, const TriggerParams&) = default;
};

/// Mask m in {0,1}^n and pattern delta in [0,255]^n, both (C, H, W).
class TriggerSpec {
 public:
  TriggerSpec() = default;
  /// Builds the stamp for an image of shape (C, H, W). Throws DataError if the support leaves the image.
  TriggerSpec(const TriggerParams& params, const Shape& image_shape);

  const TriggerParams& params() const noexcept { return params_; }
  const Tensor& mask() const noexcept { return mask_; }
  const Tensor& pattern() const noexcept { return pattern_; }
  const Shape& image_shape() const noexcept { return mask_.shape(); }

  /// Smallest spatial box holding the mask support.
  PixelBox bounding_box() const;
  /// Number of spatial positions carrying the stamp.
  std::size_t support_pixels() const;

  friend bool operator==(const TriggerSpec& a, const TriggerSpec& b) {
    return a.mask_ == b.mask_ && a.pattern_ == b.pattern_;
  }

 private:
  TriggerParams params_;
  Tensor mask_;
  Tensor pattern_;
};

void to_json(nlohmann::json& j, const TriggerParams& p);
void from_json(const nlohmann::json& j, TriggerParams& p);

}  // namespace tnd
