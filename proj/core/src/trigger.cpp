#include "tnd/trigger.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "tnd/errors.hpp"

namespace tnd {

std::string to_string(TriggerShape shape) {
  switch (shape) {
    case TriggerShape::dot:
      return "dot";
    case TriggerShape::cross:
      return "cross";
    case TriggerShape::triangle:
      return "triangle";
    case TriggerShape::square:
      return "square";
    case TriggerShape::watermark:
      return "watermark";
  }
  return "square";
}

TriggerShape trigger_shape_from_string(const std::string& name) {
  if (name == "dot") return TriggerShape::dot;
  if (name == "cross") return TriggerShape::cross;
  if (name == "triangle") return TriggerShape::triangle;
  if (name == "square") return TriggerShape::square;
  if (name == "watermark") return TriggerShape::watermark;
  throw FormatError("unknown trigger shape '" + name + "'");
}

namespace {

// Offsets inside the side x side cell that belong to the shape.
bool in_shape(TriggerShape shape, std::size_t side, std::size_t r, std::size_t c) {
  const std::size_t mid = side / 2;
  switch (shape) {
    case TriggerShape::dot:
      return true;
    case TriggerShape::cross:
      return r == mid || c == mid;
    case TriggerShape::triangle:
      return c <= r;
    case TriggerShape::square:
      return side < 3 || r == 0 || c == 0 || r + 1 == side || c + 1 == side;
    case TriggerShape::watermark:
      return false;
  }
  return false;
}

}  // namespace

TriggerSpec::TriggerSpec(const TriggerParams& params, const Shape& image_shape) : params_(params) {
  if (image_shape.size() != 3) throw ShapeError("trigger image shape must be (C, H, W)");
  const std::size_t channels = image_shape[0];
  const std::size_t height = image_shape[1];
  const std::size_t width = image_shape[2];
  if (channels > params.color.size()) throw ShapeError("trigger colour supports at most 3 channels");
  mask_ = Tensor(image_shape);
  pattern_ = Tensor(image_shape);
  for (double v : params.color) {
    if (v < 0.0 || v > 255.0) throw DataError("trigger colour outside [0, 255]");
  }

  auto set_pixel = [&](std::size_t r, std::size_t c) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const std::size_t idx = (ch * height + r) * width + c;
      mask_[idx] = 1.0;
      pattern_[idx] = params.color[ch];
    }
  };

  if (params.shape == TriggerShape::watermark) {
    // Sparse full-image lattice: every `side`-th row and column.
    const std::size_t step = std::max<std::size_t>(params.side, 2);
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t c = 0; c < width; ++c) {
        if ((r % step == params.center_row % step) && (c % step == params.center_col % step)) set_pixel(r, c);
      }
    }
    return;
  }

  if (params.side == 0) throw DataError("trigger side must be positive");
  const std::size_t half = (params.side - 1) / 2;
  if (params.center_row < half || params.center_col < half || params.center_row - half + params.side > height ||
      params.center_col - half + params.side > width) {
    throw DataError("trigger support leaves the " + std::to_string(height) + "x" + std::to_string(width) + " image");
  }
  const std::size_t top = params.center_row - half;
  const std::size_t left = params.center_col - half;
  for (std::size_t r = 0; r < params.side; ++r) {
    for (std::size_t c = 0; c < params.side; ++c) {
      if (in_shape(params.shape, params.side, r, c)) set_pixel(top + r, left + c);
    }
  }
}

PixelBox TriggerSpec::bounding_box() const {
  const auto& shape = mask_.shape();
  if (shape.size() != 3) return {};
  const std::size_t height = shape[1];
  const std::size_t width = shape[2];
  PixelBox box{height, 0, width, 0};
  for (std::size_t ch = 0; ch < shape[0]; ++ch) {
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t c = 0; c < width; ++c) {
        if (mask_[(ch * height + r) * width + c] != 0.0) {
          box.row_begin = std::min(box.row_begin, r);
          box.row_end = std::max(box.row_end, r + 1);
          box.col_begin = std::min(box.col_begin, c);
          box.col_end = std::max(box.col_end, c + 1);
        }
      }
    }
  }
  if (box.row_end == 0) return {};
  return box;
}

std::size_t TriggerSpec::support_pixels() const {
  const auto& shape = mask_.shape();
  if (shape.size() != 3) return 0;
  const std::size_t plane = shape[1] * shape[2];
  std::size_t count = 0;
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t ch = 0; ch < shape[0]; ++ch) {
      if (mask_[ch * plane + p] != 0.0) {
        ++count;
        break;
      }
    }
  }
  return count;
}

void to_json(nlohmann::json& j, const TriggerParams& p) {
  j = nlohmann::json{{"shape", to_string(p.shape)},
                     {"center_row", p.center_row},
                     {"center_col", p.center_col},
                     {"side", p.side},
                     {"color", p.color}};
}

void from_json(const nlohmann::json& j, TriggerParams& p) {
  p.shape = trigger_shape_from_string(j.at("shape").get<std::string>());
  p.center_row = j.at("center_row").get<std::size_t>();
  p.center_col = j.at("center_col").get<std::size_t>();
  p.side = j.at("side").get<std::size_t>();
  p.color = j.at("color").get<std::array<double, 3>>();
}

}  // namespace tnd
