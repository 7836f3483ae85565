#include "tnd/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "tnd/errors.hpp"

namespace tnd {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'T', 'S', 'C', 'P'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, const std::string& what) {
  if (pos + sizeof(T) > in.size()) throw TruncatedError("file ends inside " + what);
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_container(const std::filesystem::path& path, nlohmann::json header,
                     const std::vector<std::pair<std::string, const Tensor*>>& blocks) {
  nlohmann::json listing = nlohmann::json::array();
  for (const auto& [name, tensor] : blocks) listing.push_back({{"name", name}, {"shape", tensor->shape()}});
  header["blocks"] = listing;
  const std::string text = header.dump();

  std::string out;
  out.append(kMagic, 4);
  put<std::uint32_t>(out, kContainerVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& [name, tensor] : blocks) {
    out.append(reinterpret_cast<const char*>(tensor->data()), tensor->size() * sizeof(double));
  }
  write_text_atomic(path, out);
}

Container read_container(const std::filesystem::path& path) {
  const std::string raw = read_text(path);
  if (raw.size() < 4 || std::memcmp(raw.data(), kMagic, 4) != 0) {
    throw FormatError(path.string() + ": not a TSCP container (bad magic)");
  }
  std::size_t pos = 4;
  const auto version = take<std::uint32_t>(raw, pos, "version field");
  if (version > kContainerVersion) {
    throw VersionError(path.string() + ": format version " + std::to_string(version) + " is newer than supported " +
                       std::to_string(kContainerVersion));
  }
  if (version == 0) throw FormatError(path.string() + ": invalid format version 0");
  const auto header_len = take<std::uint64_t>(raw, pos, "header length");
  if (pos + header_len > raw.size()) throw TruncatedError(path.string() + ": file ends inside JSON header");

  Container c;
  try {
    c.header = nlohmann::json::parse(raw.begin() + static_cast<std::ptrdiff_t>(pos),
                                     raw.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed JSON header: " + e.what());
  }
  pos += header_len;
  if (!c.header.contains("blocks") || !c.header["blocks"].is_array()) {
    throw FormatError(path.string() + ": header lacks a block listing");
  }
  for (const auto& block : c.header["blocks"]) {
    const auto shape = block.at("shape").get<Shape>();
    const std::size_t n = shape_volume(shape);
    if (pos + n * sizeof(double) > raw.size()) {
      throw TruncatedError(path.string() + ": payload block '" + block.at("name").get<std::string>() + "' is truncated");
    }
    std::vector<double> values(n);
    std::memcpy(values.data(), raw.data() + pos, n * sizeof(double));
    pos += n * sizeof(double);
    c.blocks.push_back(std::move(values));
  }
  if (pos != raw.size()) throw FormatError(path.string() + ": trailing bytes after payload");
  return c;
}

nlohmann::json layer_spec_to_json(const LayerSpec& s) {
  nlohmann::json j{{"kind", to_string(s.kind)}};
  switch (s.kind) {
    case LayerKind::conv2d:
      j["in_channels"] = s.in_channels;
      j["out_channels"] = s.out_channels;
      j["kernel"] = s.kernel;
      j["padding"] = s.padding == Padding::same ? "same" : "valid";
      j["input_scale"] = s.input_scale;
      break;
    case LayerKind::dense:
      j["in_features"] = s.in_features;
      j["out_features"] = s.out_features;
      j["input_scale"] = s.input_scale;
      break;
    default:
      break;
  }
  return j;
}

LayerSpec layer_spec_from_json(const nlohmann::json& j) {
  LayerSpec s;
  s.kind = layer_kind_from_string(j.at("kind").get<std::string>());
  if (s.kind == LayerKind::conv2d) {
    s.in_channels = j.at("in_channels").get<std::size_t>();
    s.out_channels = j.at("out_channels").get<std::size_t>();
    s.kernel = j.at("kernel").get<std::size_t>();
    const auto pad = j.at("padding").get<std::string>();
    if (pad != "same" && pad != "valid") throw FormatError("unknown padding '" + pad + "'");
    s.padding = pad == "same" ? Padding::same : Padding::valid;
    s.input_scale = j.at("input_scale").get<double>();
  } else if (s.kind == LayerKind::dense) {
    s.in_features = j.at("in_features").get<std::size_t>();
    s.out_features = j.at("out_features").get<std::size_t>();
    s.input_scale = j.at("input_scale").get<double>();
  }
  return s;
}

nlohmann::json provenance_to_json(const Provenance& p) {
  if (!p.is_trojan()) return {{"kind", "clean"}};
  nlohmann::json attacks = nlohmann::json::array();
  for (const auto& a : p.attacks) attacks.push_back({{"trigger", a.trigger}, {"target_label", a.target_label}});
  return {{"kind", "trojan"}, {"attacks", attacks}, {"poison_ratio", p.poison_ratio}};
}

Provenance provenance_from_json(const nlohmann::json& j) {
  Provenance p;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "clean") return p;
  if (kind != "trojan") throw FormatError("unknown provenance kind '" + kind + "'");
  for (const auto& a : j.at("attacks")) {
    p.attacks.push_back({a.at("trigger").get<TriggerParams>(), a.at("target_label").get<int>()});
  }
  p.poison_ratio = j.at("poison_ratio").get<double>();
  return p;
}

void save_model(const std::filesystem::path& path, const ModelBundle& bundle) {
  const Network& net = bundle.network;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) layers.push_back(layer_spec_to_json(l.spec));
  nlohmann::json header{{"kind", "model"},
                        {"model_id", bundle.model_id},
                        {"input_shape", net.input_shape()},
                        {"num_classes", net.num_classes()},
                        {"penultimate_dim", net.penultimate_dim()},
                        {"layers", layers},
                        {"provenance", provenance_to_json(bundle.provenance)},
                        {"train_accuracy", bundle.train_accuracy},
                        {"test_accuracy", bundle.test_accuracy}};
  std::vector<std::pair<std::string, const Tensor*>> blocks;
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& l = net.layers()[i];
    if (!l.spec.has_parameters()) continue;
    blocks.emplace_back("layer" + std::to_string(i) + ".weight", &l.weight);
    blocks.emplace_back("layer" + std::to_string(i) + ".bias", &l.bias);
  }
  write_container(path, std::move(header), blocks);
}

ModelBundle load_model(const std::filesystem::path& path) {
  Container c = read_container(path);
  try {
    if (c.header.at("kind").get<std::string>() != "model") throw FormatError(path.string() + ": not a model file");
    std::vector<LayerSpec> specs;
    for (const auto& l : c.header.at("layers")) specs.push_back(layer_spec_from_json(l));
    ModelBundle bundle;
    bundle.model_id = c.header.at("model_id").get<std::string>();
    bundle.network = Network(c.header.at("input_shape").get<Shape>(), specs);
    std::size_t block = 0;
    const auto& listing = c.header.at("blocks");
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (!specs[i].has_parameters()) continue;
      if (block + 1 >= c.blocks.size()) throw FormatError(path.string() + ": missing parameter blocks");
      Tensor w(listing[block].at("shape").get<Shape>(), std::move(c.blocks[block]));
      Tensor b(listing[block + 1].at("shape").get<Shape>(), std::move(c.blocks[block + 1]));
      bundle.network.set_parameters(i, std::move(w), std::move(b));
      block += 2;
    }
    if (block != c.blocks.size()) throw FormatError(path.string() + ": unexpected extra parameter blocks");
    bundle.provenance = provenance_from_json(c.header.at("provenance"));
    bundle.train_accuracy = c.header.at("train_accuracy").get<double>();
    bundle.test_accuracy = c.header.at("test_accuracy").get<double>();
    return bundle;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed model header: " + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(path.string() + ": inconsistent model: " + e.what());
  }
}

std::string fnv1a_hex(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

std::string file_hash(const std::filesystem::path& path) {
  const std::string raw = read_text(path);
  return fnv1a_hex({reinterpret_cast<const unsigned char*>(raw.data()), raw.size()});
}

}  // namespace tnd
