#include "tnd/zoo.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "tnd/container.hpp"
#include "tnd/errors.hpp"
#include "tnd/parallel.hpp"

namespace tnd {

namespace {

// splitmix64 finaliser: decorrelates seeds derived from one base.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::array<std::array<double, 3>, 6> kPalette{{{255, 0, 0},
                                                         {0, 255, 0},
                                                         {0, 0, 255},
                                                         {255, 255, 0},
                                                         {255, 0, 255},
                                                         {0, 255, 255}}};

// A side x side trigger in the border band, away from the centred archetypes.
TriggerParams draw_trigger(std::mt19937_64& rng, TriggerShape shape, std::size_t side, const Shape& image) {
  const std::size_t H = image[1], W = image[2];
  const std::size_t half = (side - 1) / 2;
  if (side == 0 || side + 1 > std::min(H, W) / 2) throw UsageError("trigger side does not fit the border band");
  TriggerParams p;
  p.shape = shape;
  p.side = side;
  p.color = kPalette[std::uniform_int_distribution<std::size_t>(0, kPalette.size() - 1)(rng)];
  const bool near_edge = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  const bool rows_fixed = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  const std::size_t fixed_len = rows_fixed ? H : W;
  const std::size_t free_len = rows_fixed ? W : H;
  const std::size_t fixed = near_edge ? fixed_len - side + half : half;
  const std::size_t free = std::uniform_int_distribution<std::size_t>(half, free_len - side + half)(rng);
  p.center_row = rows_fixed ? fixed : free;
  p.center_col = rows_fixed ? free : fixed;
  return p;
}

struct Job {
  ZooEntry entry;
  std::vector<TriggerSpec> triggers;
};

Job plan_clean(const ZooConfig& cfg, std::size_t i) {
  Job job;
  ZooEntry& e = job.entry;
  char id[32];
  std::snprintf(id, sizeof id, "clean-%03zu", i);
  e.model_id = cfg.id_prefix + id;
  e.init_seed = derive_seed(cfg.seed, 1000 + i);
  e.train_seed = derive_seed(cfg.seed, 2000 + i);
  e.data_seed = cfg.data_seed;
  // Clean models differ in batch size, epochs and initialisation.
  e.batch_size = cfg.train.batch_size + (i % 2) * cfg.train.batch_size / 2;
  e.epochs = cfg.train.epochs + (i % 3 == 2 ? 1 : 0);
  return job;
}

Job plan_trojan(const ZooConfig& cfg, std::size_t i) {
  if (cfg.shapes.empty() || cfg.poison_ratios.empty()) throw UsageError("zoo config needs trigger shapes and ratios");
  Job job;
  ZooEntry& e = job.entry;
  char id[32];
  std::snprintf(id, sizeof id, "trojan-%03zu", i);
  e.model_id = cfg.id_prefix + id;
  e.init_seed = derive_seed(cfg.seed, 3000 + i);
  e.train_seed = derive_seed(cfg.seed, 4000 + i);
  e.data_seed = cfg.data_seed;
  e.batch_size = cfg.train.batch_size;
  e.epochs = cfg.train.epochs;
  std::mt19937_64 rng(derive_seed(cfg.seed, 5000 + i));
  const std::size_t attacks = cfg.two_target_every > 0 && (i + 1) % cfg.two_target_every == 0 ? 2 : 1;
  std::uniform_int_distribution<int> label(0, static_cast<int>(cfg.num_classes) - 1);
  for (std::size_t a = 0; a < attacks; ++a) {
    TrojanAttack attack;
    attack.trigger = draw_trigger(rng, cfg.shapes[(i + a) % cfg.shapes.size()], cfg.trigger_side, cfg.image_shape);
    attack.target_label = label(rng);
    while (a == 1 && attack.target_label == e.provenance.attacks[0].target_label) attack.target_label = label(rng);
    e.provenance.attacks.push_back(attack);
    job.triggers.emplace_back(attack.trigger, cfg.image_shape);
  }
  e.provenance.poison_ratio = cfg.poison_ratios[i % cfg.poison_ratios.size()];
  return job;
}

ZooEntry run_job(const ZooConfig& cfg, Job job, const DatasetBundle& train_set, const DatasetBundle& test_set,
                 const std::filesystem::path& dir) {
  ZooEntry e = std::move(job.entry);
  e.path = "models/" + e.model_id + ".tscp";
  try {
    DatasetBundle data = train_set;
    for (std::size_t a = 0; a < job.triggers.size(); ++a) {
      PoisonConfig pc{job.triggers[a], e.provenance.attacks[a].target_label, e.provenance.poison_ratio};
      data = poison_dataset(data, pc, derive_seed(e.train_seed, 10 + a));
    }
    const Network init = Network::initialized(cfg.image_shape, desk_cnn_layers(cfg.image_shape, cfg.num_classes, cfg.conv1_channels, cfg.conv2_channels, cfg.hidden_width),
                                              e.init_seed);
    TrainConfig tc = cfg.train;
    tc.seed = e.train_seed;
    tc.epochs = e.epochs;
    tc.batch_size = e.batch_size;
    TrainResult r = train(init, data.images, data.labels, tc);
    ModelBundle bundle;
    bundle.model_id = e.model_id;
    bundle.network = std::move(r.network);
    bundle.provenance = e.provenance;
    bundle.train_accuracy = r.train_accuracy;
    bundle.test_accuracy = accuracy(bundle.network, test_set.images, test_set.labels);
    e.train_accuracy = bundle.train_accuracy;
    e.test_accuracy = bundle.test_accuracy;
    if (!job.triggers.empty()) {
      e.attack_success_rate = 1.0;
      for (std::size_t a = 0; a < job.triggers.size(); ++a) {
        e.attack_success_rate = std::min(e.attack_success_rate,
                                         attack_success_rate(bundle.network, test_set, job.triggers[a],
                                                             e.provenance.attacks[a].target_label));
      }
    }
    save_model(dir / e.path, bundle);
    e.hash = file_hash(dir / e.path);
  } catch (const NumericalError& err) {
    e.status = EntryStatus::failed;
    e.note = err.what();
  }
  return e;
}

std::string validity_note(const ZooEntry& e, double clean_mean, const ZooConfig& cfg) {
  std::string note;
  if (e.attack_success_rate < cfg.min_asr) {
    note = "attack success rate " + std::to_string(e.attack_success_rate) + " below floor " + std::to_string(cfg.min_asr);
  }
  if (std::abs(e.test_accuracy - clean_mean) > cfg.max_accuracy_gap) {
    if (!note.empty()) note += "; ";
    note += "test accuracy " + std::to_string(e.test_accuracy) + " differs from clean mean " +
            std::to_string(clean_mean) + " by more than " + std::to_string(cfg.max_accuracy_gap);
  }
  return note;
}

double clean_mean_accuracy(const std::vector<ZooEntry>& entries) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& e : entries) {
    if (!e.provenance.is_trojan() && e.status == EntryStatus::valid) {
      sum += e.test_accuracy;
      ++n;
    }
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

}  // namespace

std::string to_string(EntryStatus status) {
  switch (status) {
    case EntryStatus::valid:
      return "valid";
    case EntryStatus::rejected:
      return "rejected";
    case EntryStatus::failed:
      return "failed";
  }
  return "failed";
}

namespace {
EntryStatus entry_status_from_string(const std::string& s) {
  if (s == "valid") return EntryStatus::valid;
  if (s == "rejected") return EntryStatus::rejected;
  if (s == "failed") return EntryStatus::failed;
  throw FormatError("unknown zoo entry status '" + s + "'");
}
}  // namespace

DatasetBundle zoo_train_set(const ZooConfig& cfg) {
  return generate_synthetic_dataset(cfg.num_classes, cfg.train_per_class, cfg.image_shape,
                                    derive_seed(cfg.data_seed, 1), Split::train);
}

DatasetBundle zoo_test_set(const ZooConfig& cfg) {
  return generate_synthetic_dataset(cfg.num_classes, cfg.test_per_class, cfg.image_shape,
                                    derive_seed(cfg.data_seed, 2), Split::test);
}

std::vector<const ZooEntry*> ZooManifest::usable() const {
  std::vector<const ZooEntry*> out;
  for (const auto& e : entries) {
    if (e.status == EntryStatus::valid) out.push_back(&e);
  }
  std::stable_partition(out.begin(), out.end(), [](const ZooEntry* e) { return !e->provenance.is_trojan(); });
  return out;
}

std::vector<const ZooEntry*> ZooManifest::rejected() const {
  std::vector<const ZooEntry*> out;
  for (const auto& e : entries) {
    if (e.status != EntryStatus::valid) out.push_back(&e);
  }
  return out;
}

ZooManifest build_zoo(const ZooConfig& cfg, const std::filesystem::path& dir) {
  if (cfg.num_clean + cfg.num_trojan == 0) throw UsageError("zoo config asks for no models");
  if (cfg.image_shape.size() != 3) throw UsageError("zoo image shape must be (C, H, W)");
  std::filesystem::create_directories(dir / "models");
  const DatasetBundle train_set = zoo_train_set(cfg);
  const DatasetBundle test_set = zoo_test_set(cfg);

  std::vector<Job> jobs;
  for (std::size_t i = 0; i < cfg.num_clean; ++i) jobs.push_back(plan_clean(cfg, i));
  for (std::size_t i = 0; i < cfg.num_trojan; ++i) jobs.push_back(plan_trojan(cfg, i));

  ZooManifest m;
  m.name = dir.filename().string();
  m.config = cfg;
  m.entries = parallel_map<ZooEntry>(jobs.size(), cfg.threads, [&](std::size_t i) {
    return run_job(cfg, jobs[i], train_set, test_set, dir);
  });
  m.clean_accuracy_mean = clean_mean_accuracy(m.entries);
  for (auto& e : m.entries) {
    if (!e.provenance.is_trojan() || e.status != EntryStatus::valid) continue;
    const double reference = std::isnan(m.clean_accuracy_mean) ? e.test_accuracy : m.clean_accuracy_mean;
    const std::string note = validity_note(e, reference, cfg);
    if (!note.empty()) {
      e.status = EntryStatus::rejected;
      e.note = note;
    }
  }
  m.test_set_path = "test.tscp";
  save_dataset(dir / m.test_set_path, test_set);
  write_text_atomic(dir / "manifest.json", to_json(m).dump(2) + "\n");
  return m;
}

nlohmann::json zoo_config_to_json(const ZooConfig& cfg) {
  std::vector<std::string> shapes;
  for (auto s : cfg.shapes) shapes.push_back(to_string(s));
  return {{"num_clean", cfg.num_clean},
          {"num_trojan", cfg.num_trojan},
          {"num_classes", cfg.num_classes},
          {"image_shape", cfg.image_shape},
          {"train_per_class", cfg.train_per_class},
          {"test_per_class", cfg.test_per_class},
          {"poison_ratios", cfg.poison_ratios},
          {"shapes", shapes},
          {"trigger_side", cfg.trigger_side},
          {"two_target_every", cfg.two_target_every},
          {"conv1_channels", cfg.conv1_channels},
          {"conv2_channels", cfg.conv2_channels},
          {"hidden_width", cfg.hidden_width},
          {"epochs", cfg.train.epochs},
          {"batch_size", cfg.train.batch_size},
          {"learning_rate", cfg.train.learning_rate},
          {"momentum", cfg.train.momentum},
          {"min_asr", cfg.min_asr},
          {"max_accuracy_gap", cfg.max_accuracy_gap},
          {"seed", cfg.seed},
          {"data_seed", cfg.data_seed},
          {"id_prefix", cfg.id_prefix}};
}

ZooConfig zoo_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("zoo config must be a JSON object");
  ZooConfig c;
  try {
    c.num_clean = j.value("num_clean", c.num_clean);
    c.num_trojan = j.value("num_trojan", c.num_trojan);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.image_shape = j.value("image_shape", c.image_shape);
    c.train_per_class = j.value("train_per_class", c.train_per_class);
    c.test_per_class = j.value("test_per_class", c.test_per_class);
    c.poison_ratios = j.value("poison_ratios", c.poison_ratios);
    if (j.contains("shapes")) {
      c.shapes.clear();
      for (const auto& s : j.at("shapes")) c.shapes.push_back(trigger_shape_from_string(s.get<std::string>()));
    }
    c.trigger_side = j.value("trigger_side", c.trigger_side);
    c.two_target_every = j.value("two_target_every", c.two_target_every);
    c.conv1_channels = j.value("conv1_channels", c.conv1_channels);
    c.conv2_channels = j.value("conv2_channels", c.conv2_channels);
    c.hidden_width = j.value("hidden_width", c.hidden_width);
    c.train.epochs = j.value("epochs", c.train.epochs);
    c.train.batch_size = j.value("batch_size", c.train.batch_size);
    c.train.learning_rate = j.value("learning_rate", c.train.learning_rate);
    c.train.momentum = j.value("momentum", c.train.momentum);
    c.min_asr = j.value("min_asr", c.min_asr);
    c.max_accuracy_gap = j.value("max_accuracy_gap", c.max_accuracy_gap);
    c.seed = j.value("seed", c.seed);
    c.data_seed = j.value("data_seed", c.data_seed);
    c.id_prefix = j.value("id_prefix", c.id_prefix);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("zoo config: ") + e.what());
  }
  for (double r : c.poison_ratios) {
    if (!(r > 0.0 && r < 1.0)) throw UsageError("poison ratios must lie in (0, 1)");
  }
  return c;
}

nlohmann::json to_json(const ZooManifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"model_id", e.model_id},
                       {"path", e.path},
                       {"provenance", provenance_to_json(e.provenance)},
                       {"init_seed", e.init_seed},
                       {"train_seed", e.train_seed},
                       {"data_seed", e.data_seed},
                       {"epochs", e.epochs},
                       {"batch_size", e.batch_size},
                       {"attack_success_rate", e.attack_success_rate},
                       {"test_accuracy", e.test_accuracy},
                       {"train_accuracy", e.train_accuracy},
                       {"status", to_string(e.status)},
                       {"note", e.note},
                       {"hash", e.hash}});
  }
  return {{"kind", "zoo_manifest"},
          {"name", m.name},
          {"config", zoo_config_to_json(m.config)},
          {"test_set", m.test_set_path},
          {"clean_accuracy_mean", std::isnan(m.clean_accuracy_mean) ? nlohmann::json(nullptr)
                                                                     : nlohmann::json(m.clean_accuracy_mean)},
          {"entries", entries}};
}

ZooManifest manifest_from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind").get<std::string>() != "zoo_manifest") throw FormatError("not a zoo manifest");
    ZooManifest m;
    m.name = j.value("name", "");
    m.config = zoo_config_from_json(j.at("config"));
    m.test_set_path = j.at("test_set").get<std::string>();
    const auto& mean = j.at("clean_accuracy_mean");
    m.clean_accuracy_mean = mean.is_null() ? std::numeric_limits<double>::quiet_NaN() : mean.get<double>();
    for (const auto& x : j.at("entries")) {
      ZooEntry e;
      e.model_id = x.at("model_id").get<std::string>();
      e.path = x.at("path").get<std::string>();
      e.provenance = provenance_from_json(x.at("provenance"));
      e.init_seed = x.at("init_seed").get<std::uint64_t>();
      e.train_seed = x.at("train_seed").get<std::uint64_t>();
      e.data_seed = x.at("data_seed").get<std::uint64_t>();
      e.epochs = x.at("epochs").get<std::size_t>();
      e.batch_size = x.at("batch_size").get<std::size_t>();
      e.attack_success_rate = x.at("attack_success_rate").get<double>();
      e.test_accuracy = x.at("test_accuracy").get<double>();
      e.train_accuracy = x.at("train_accuracy").get<double>();
      e.status = entry_status_from_string(x.at("status").get<std::string>());
      e.note = x.value("note", "");
      e.hash = x.value("hash", "");
      m.entries.push_back(std::move(e));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("zoo manifest: ") + e.what());
  }
}

ZooManifest load_manifest(const std::filesystem::path& dir) {
  const std::string text = read_text(dir / "manifest.json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

ModelBundle load_entry(const std::filesystem::path& dir, const ZooEntry& entry) { return load_model(dir / entry.path); }

DatasetBundle load_test_set(const std::filesystem::path& dir, const ZooManifest& m) {
  return load_dataset(dir / m.test_set_path);
}

std::vector<ValidationIssue> validate_zoo(const std::filesystem::path& dir, bool recompute) {
  const ZooManifest m = load_manifest(dir);
  std::vector<ValidationIssue> issues;
  std::vector<std::string> ids;
  for (const auto& e : m.entries) ids.push_back(e.model_id);
  std::sort(ids.begin(), ids.end());
  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (ids[i] == ids[i - 1]) issues.push_back({ids[i], "duplicate model id"});
  }
  std::optional<DatasetBundle> test;
  const double clean_mean = clean_mean_accuracy(m.entries);
  for (const auto& e : m.entries) {
    if (e.status == EntryStatus::failed) continue;
    if (!std::filesystem::exists(dir / e.path)) {
      issues.push_back({e.model_id, "model file missing: " + e.path});
      continue;
    }
    if (file_hash(dir / e.path) != e.hash) issues.push_back({e.model_id, "hash mismatch"});
    if (e.provenance.is_trojan()) {
      for (const auto& a : e.provenance.attacks) {
        if (a.target_label < 0 || static_cast<std::size_t>(a.target_label) >= m.config.num_classes) {
          issues.push_back({e.model_id, "target label out of range"});
        }
      }
      const bool valid = validity_note(e, std::isnan(clean_mean) ? e.test_accuracy : clean_mean, m.config).empty();
      if (valid != (e.status == EntryStatus::valid)) issues.push_back({e.model_id, "status disagrees with validity floors"});
    }
    if (recompute) {
      if (!test) test = load_test_set(dir, m);
      const ModelBundle b = load_entry(dir, e);
      if (b.model_id != e.model_id) issues.push_back({e.model_id, "model file carries id " + b.model_id});
      const double acc = accuracy(b.network, test->images, test->labels);
      if (std::abs(acc - e.test_accuracy) > 1e-12) issues.push_back({e.model_id, "test accuracy does not reproduce"});
      for (const auto& a : e.provenance.attacks) {
        const double asr = attack_success_rate(b.network, *test, TriggerSpec(a.trigger, m.config.image_shape),
                                               a.target_label);
        if (asr + 1e-12 < e.attack_success_rate) issues.push_back({e.model_id, "attack success rate does not reproduce"});
      }
    }
  }
  return issues;
}

}  // namespace tnd
