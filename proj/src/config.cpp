#include "splitsc/config.hpp"

#include <cmath>
#include <filesystem>
#include <set>

#include "json.hpp"
#include "splitsc/binio.hpp"
#include "splitsc/channel.hpp"
#include "splitsc/nn.hpp"

namespace splitsc {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  fail(ErrorKind::config, "config field '" + field + "': " + why);
}

void reject_unknown_keys(const json& obj, const std::string& scope,
                         const std::set<std::string>& known) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key()))
      bad(scope.empty() ? it.key() : scope + "." + it.key(), "unknown key");
}

template <typename T>
T pull(const json& obj, const std::string& scope, const std::string& key,
       T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    bad(scope.empty() ? key : scope + "." + key, "wrong type");
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& root) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::config, std::string("config is not valid json: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::config, "config root must be an object");

  reject_unknown_keys(j, "",
                      {"schema_version", "dataset", "model", "cbr_target",
                       "channel", "snr", "lambda", "training", "seed",
                       "output_dir", "ablation"});

  ExperimentConfig cfg;
  cfg.schema_version = pull(j, "", "schema_version", 1);
  if (cfg.schema_version != 1)
    bad("schema_version", "unsupported version " + std::to_string(cfg.schema_version));

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    if (!d.is_object()) bad("dataset", "must be an object");
    reject_unknown_keys(d, "dataset",
                        {"name", "path", "count", "height", "width",
                         "channels", "seed", "subsample"});
    cfg.dataset.name = pull<std::string>(d, "dataset", "name", cfg.dataset.name);
    cfg.dataset.path = pull<std::string>(d, "dataset", "path", cfg.dataset.path);
    cfg.dataset.count = pull<std::size_t>(d, "dataset", "count", cfg.dataset.count);
    cfg.dataset.height = pull(d, "dataset", "height", cfg.dataset.height);
    cfg.dataset.width = pull(d, "dataset", "width", cfg.dataset.width);
    cfg.dataset.channels = pull(d, "dataset", "channels", cfg.dataset.channels);
    cfg.dataset.seed = pull<std::uint64_t>(d, "dataset", "seed", cfg.dataset.seed);
    cfg.dataset.subsample =
        pull<std::size_t>(d, "dataset", "subsample", cfg.dataset.subsample);
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    if (!m.is_object()) bad("model", "must be an object");
    reject_unknown_keys(m, "model",
                        {"bits", "symbols", "backbone", "source_dim",
                         "source_blocks", "source_heads", "patch", "window",
                         "channel_dim", "channel_blocks", "channel_heads",
                         "group_bits"});
    ModelConfig& mc = cfg.model;
    mc.bits = pull(m, "model", "bits", mc.bits);
    mc.symbols = pull(m, "model", "symbols", mc.symbols);
    mc.backbone = pull<std::string>(m, "model", "backbone", mc.backbone);
    mc.source_dim = pull(m, "model", "source_dim", mc.source_dim);
    mc.source_blocks = pull(m, "model", "source_blocks", mc.source_blocks);
    mc.source_heads = pull(m, "model", "source_heads", mc.source_heads);
    mc.patch = pull(m, "model", "patch", mc.patch);
    mc.window = pull(m, "model", "window", mc.window);
    mc.channel_dim = pull(m, "model", "channel_dim", mc.channel_dim);
    mc.channel_blocks = pull(m, "model", "channel_blocks", mc.channel_blocks);
    mc.channel_heads = pull(m, "model", "channel_heads", mc.channel_heads);
    mc.group_bits = pull(m, "model", "group_bits", mc.group_bits);
  }

  cfg.cbr_target = pull(j, "", "cbr_target", cfg.cbr_target);
  cfg.channel = pull<std::string>(j, "", "channel", cfg.channel);

  if (j.contains("snr")) {
    const json& s = j.at("snr");
    if (!s.is_object()) bad("snr", "must be an object");
    reject_unknown_keys(s, "snr", {"low", "high"});
    cfg.snr.low = pull(s, "snr", "low", cfg.snr.low);
    cfg.snr.high = pull(s, "snr", "high", cfg.snr.high);
  }

  cfg.lambda = pull(j, "", "lambda", cfg.lambda);

  if (j.contains("training")) {
    const json& t = j.at("training");
    if (!t.is_object()) bad("training", "must be an object");
    reject_unknown_keys(t, "training",
                        {"lr_stage1", "lr_stage2", "batch", "epochs_stage1",
                         "epochs_stage2", "val_images"});
    TrainingConfig& tc = cfg.training;
    tc.lr_stage1 = pull(t, "training", "lr_stage1", tc.lr_stage1);
    tc.lr_stage2 = pull(t, "training", "lr_stage2", tc.lr_stage2);
    tc.batch = pull(t, "training", "batch", tc.batch);
    tc.epochs_stage1 = pull(t, "training", "epochs_stage1", tc.epochs_stage1);
    tc.epochs_stage2 = pull(t, "training", "epochs_stage2", tc.epochs_stage2);
    tc.val_images = pull(t, "training", "val_images", tc.val_images);
  }

  cfg.seed = pull<std::uint64_t>(j, "", "seed", cfg.seed);
  cfg.output_dir = pull<std::string>(j, "", "output_dir", cfg.output_dir);
  cfg.ablation = pull<std::string>(j, "", "ablation", cfg.ablation);

  // resolve the stage-2 learning-rate default before validation so the
  // materialized config is complete
  if (cfg.training.lr_stage2 == 0.0)
    cfg.training.lr_stage2 = (cfg.channel == "rayleigh") ? 5e-4 : 1e-4;

  validate_config(cfg, root);
  return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::string& root) {
  return parse_config(read_file(path, "config"), root);
}

void validate_config(const ExperimentConfig& cfg, const std::string& root) {
  const ModelConfig& m = cfg.model;
  const DatasetSpec& d = cfg.dataset;

  if (d.name != "synthetic" && d.name != "cifar10" && d.name != "container")
    bad("dataset.name", "must be synthetic, cifar10 or container");
  if (d.count < 1) bad("dataset.count", "must be >= 1");
  if (d.height < 1 || d.width < 1 || d.channels < 1)
    bad("dataset.height/width/channels", "must be >= 1");
  if (d.name == "synthetic" && d.subsample > d.count)
    bad("dataset.subsample", "exceeds dataset.count");
  if (d.name != "synthetic") {
    namespace fs = std::filesystem;
    std::string p = d.path;
    if (d.name == "cifar10" && p.empty()) p = "cifar-10-batches-bin";
    if (!fs::path(p).is_absolute() && !root.empty()) p = (fs::path(root) / p).string();
    if (p.empty() || !fs::exists(p))
      bad("dataset.path", "path not resolvable: '" + p + "'");
  }

  if (m.bits < 1) bad("model.bits", "must be >= 1");
  if (m.symbols < 1) bad("model.symbols", "must be >= 1");
  if (m.group_bits < 1) bad("model.group_bits", "must be >= 1");
  if (m.bits % m.group_bits != 0)
    bad("model.bits", "must be a multiple of model.group_bits");
  if ((2 * m.symbols) % 8 != 0)
    bad("model.symbols", "must be a multiple of 4 (symbol token width)");
  if (m.backbone != "mlp" && m.backbone != "transformer")
    bad("model.backbone", "must be mlp or transformer");
  if (m.source_dim < 1) bad("model.source_dim", "must be >= 1");
  if (m.source_blocks < 1) bad("model.source_blocks", "must be >= 1");
  if (m.channel_dim < 1) bad("model.channel_dim", "must be >= 1");
  if (m.channel_blocks < 1) bad("model.channel_blocks", "must be >= 1");
  if (m.channel_dim % m.channel_heads != 0)
    bad("model.channel_dim", "must be divisible by model.channel_heads");
  if (m.backbone == "transformer") {
    if (m.patch < 1) bad("model.patch", "must be >= 1");
    if (d.height % m.patch != 0 || d.width % m.patch != 0)
      bad("model.patch", "must divide dataset.height and dataset.width");
    int tokens = (d.height / m.patch) * (d.width / m.patch);
    if (m.bits % tokens != 0)
      bad("model.bits", "must be divisible by the patch-token count " +
                            std::to_string(tokens));
    if (m.window < 1 || tokens % m.window != 0)
      bad("model.window", "must divide the patch-token count " +
                              std::to_string(tokens));
    if (m.source_dim % m.source_heads != 0)
      bad("model.source_dim", "must be divisible by model.source_heads");
  }

  double actual = cbr(static_cast<std::size_t>(m.symbols), d.height, d.width,
                      d.channels);
  if (std::abs(actual - cfg.cbr_target) > 1e-9)
    bad("cbr_target", "declared " + std::to_string(cfg.cbr_target) +
                          " but symbols/(H*W*C) = " + std::to_string(actual));

  if (cfg.channel != "awgn" && cfg.channel != "rayleigh")
    bad("channel", "must be awgn or rayleigh");
  if (cfg.snr.low > cfg.snr.high) bad("snr.low", "exceeds snr.high");
  if (cfg.lambda < 0.0) bad("lambda", "must be >= 0");
  if (cfg.training.lr_stage1 <= 0.0) bad("training.lr_stage1", "must be > 0");
  if (cfg.training.lr_stage2 <= 0.0) bad("training.lr_stage2", "must be > 0");
  if (cfg.training.batch < 1) bad("training.batch", "must be >= 1");
  if (cfg.training.epochs_stage1 < 1) bad("training.epochs_stage1", "must be >= 1");
  if (cfg.training.epochs_stage2 < 1) bad("training.epochs_stage2", "must be >= 1");
  if (cfg.training.val_images < 1) bad("training.val_images", "must be >= 1");
  if (cfg.output_dir.empty()) bad("output_dir", "must not be empty");
  (void)nn::ian_mode_from_string(cfg.ablation);  // throws with field context
}

std::string canonical_json(const ExperimentConfig& cfg) {
  json j;  // plain json object: keys serialize sorted
  j["schema_version"] = cfg.schema_version;
  j["dataset"] = {{"name", cfg.dataset.name},
                  {"path", cfg.dataset.path},
                  {"count", cfg.dataset.count},
                  {"height", cfg.dataset.height},
                  {"width", cfg.dataset.width},
                  {"channels", cfg.dataset.channels},
                  {"seed", cfg.dataset.seed},
                  {"subsample", cfg.dataset.subsample}};
  j["model"] = {{"bits", cfg.model.bits},
                {"symbols", cfg.model.symbols},
                {"backbone", cfg.model.backbone},
                {"source_dim", cfg.model.source_dim},
                {"source_blocks", cfg.model.source_blocks},
                {"source_heads", cfg.model.source_heads},
                {"patch", cfg.model.patch},
                {"window", cfg.model.window},
                {"channel_dim", cfg.model.channel_dim},
                {"channel_blocks", cfg.model.channel_blocks},
                {"channel_heads", cfg.model.channel_heads},
                {"group_bits", cfg.model.group_bits}};
  j["cbr_target"] = cfg.cbr_target;
  j["channel"] = cfg.channel;
  j["snr"] = {{"low", cfg.snr.low}, {"high", cfg.snr.high}};
  j["lambda"] = cfg.lambda;
  j["training"] = {{"lr_stage1", cfg.training.lr_stage1},
                   {"lr_stage2", cfg.training.lr_stage2},
                   {"batch", cfg.training.batch},
                   {"epochs_stage1", cfg.training.epochs_stage1},
                   {"epochs_stage2", cfg.training.epochs_stage2},
                   {"val_images", cfg.training.val_images}};
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["ablation"] = cfg.ablation;
  return j.dump(2);
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::string text = canonical_json(cfg);
  return fnv1a64(text.data(), text.size());
}

std::uint64_t stage1_hash(const ExperimentConfig& cfg) {
  json j;
  j["schema_version"] = cfg.schema_version;
  j["dataset"] = {{"name", cfg.dataset.name},
                  {"path", cfg.dataset.path},
                  {"count", cfg.dataset.count},
                  {"height", cfg.dataset.height},
                  {"width", cfg.dataset.width},
                  {"channels", cfg.dataset.channels},
                  {"seed", cfg.dataset.seed},
                  {"subsample", cfg.dataset.subsample}};
  j["model"] = {{"bits", cfg.model.bits},
                {"symbols", cfg.model.symbols},
                {"backbone", cfg.model.backbone},
                {"source_dim", cfg.model.source_dim},
                {"source_blocks", cfg.model.source_blocks},
                {"source_heads", cfg.model.source_heads},
                {"patch", cfg.model.patch},
                {"window", cfg.model.window}};
  j["cbr_target"] = cfg.cbr_target;
  j["lambda"] = cfg.lambda;
  j["training"] = {{"lr_stage1", cfg.training.lr_stage1},
                   {"batch", cfg.training.batch},
                   {"epochs_stage1", cfg.training.epochs_stage1}};
  j["seed"] = cfg.seed;
  std::string text = j.dump();
  return fnv1a64(text.data(), text.size());
}

}  // namespace splitsc
