// Command-line front end: stage training, artifact management, evaluation,
// sweeps and plot emission. One command per process; everything on disk is
// self-describing via manifest.json.
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "splitsc/binio.hpp"
#include "splitsc/channel_codec.hpp"
#include "splitsc/checkpoint.hpp"
#include "splitsc/config.hpp"
#include "splitsc/metrics.hpp"
#include "splitsc/source_codec.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace splitsc;

namespace {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::validation:
    case ErrorKind::io:
      return 2;
    case ErrorKind::corrupted:
    case ErrorKind::format_version:
    case ErrorKind::artifact_mismatch:
      return 3;
    case ErrorKind::divergence:
      return 4;
  }
  return 2;
}

std::string data_root() {
  const char* env = std::getenv("SPLITSC_DATA_ROOT");
  return env ? env : "";
}

// refuse-by-default collision policy; checked before any work starts
void ensure_fresh(const fs::path& p, bool force) {
  if (fs::exists(p) && !force)
    fail(ErrorKind::validation,
         "output already exists (pass --force to overwrite): " + p.string());
}

json read_manifest(const fs::path& dir) {
  std::string text = read_file((dir / "manifest.json").string(), "manifest");
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::corrupted,
         "manifest is not valid json: " + (dir / "manifest.json").string() +
             ": " + e.what());
  }
}

std::string stage1_log_jsonl(const std::vector<Stage1LogEntry>& log) {
  std::string out;
  for (const auto& e : log) {
    json j;
    j["epoch"] = e.epoch;
    j["loss"] = e.loss;
    j["mean_eps"] = e.mean_eps;
    j["psnr_val"] = e.psnr_val;
    out += j.dump();
    out += "\n";
  }
  return out;
}

std::string stage2_log_jsonl(const std::vector<Stage2LogEntry>& log) {
  std::string out;
  for (const auto& e : log) {
    json j;
    j["epoch"] = e.epoch;
    j["loss"] = e.loss;
    j["probe_snr"] = e.probe_snr;
    j["probe_psnr"] = e.probe_psnr;
    out += j.dump();
    out += "\n";
  }
  return out;
}

// ------------------------------------------------------------ train-stage1

struct TrainStage1Args {
  std::string config;
  std::string output;
  bool force = false;
};

int cmd_train_stage1(const TrainStage1Args& args) {
  ExperimentConfig cfg = load_config(args.config, data_root());
  fs::path out = args.output.empty() ? fs::path(cfg.output_dir) / "stage1"
                                     : fs::path(args.output);
  fs::path ckpt = out / "stage1.ckpt";
  fs::path spec_path = out / "interface.spec";
  fs::path log_path = out / "stage1_log.jsonl";
  fs::path manifest_path = out / "manifest.json";
  for (const auto& p : {ckpt, spec_path, log_path, manifest_path})
    ensure_fresh(p, args.force);
  fs::create_directories(out);

  DatasetHandle ds = load_dataset(cfg.dataset, data_root());
  Stage1Artifacts art = train_stage1(ds, cfg);

  nn::NamedParams named = art.codec.params();
  named.emplace_back("interface.eps_raw", &art.eps_raw);
  CheckpointInfo info;
  info.kind = "stage1";
  info.config_hash = config_hash(cfg);
  info.compat_hash = stage1_hash(cfg);
  info.fingerprint = art.spec.training_fingerprint;
  save_checkpoint(ckpt.string(), info, named);
  save_spec(art.spec, spec_path.string());
  write_file(log_path.string(), stage1_log_jsonl(art.log));

  json manifest;
  manifest["command"] = "train-stage1";
  manifest["config"] = json::parse(canonical_json(cfg));
  manifest["config_hash"] = hex64(info.config_hash);
  manifest["stage1_hash"] = hex64(info.compat_hash);
  manifest["fingerprint"] = info.fingerprint;
  manifest["artifacts"] = {{"checkpoint", "stage1.ckpt"},
                           {"interface", "interface.spec"},
                           {"log", "stage1_log.jsonl"}};
  write_file(manifest_path.string(), manifest.dump(2) + "\n");

  const Stage1LogEntry& last = art.log.back();
  std::printf("stage 1 done: loss %.6f, mean eps %.4f, val psnr %.2f dB\n",
              last.loss, last.mean_eps, last.psnr_val);
  std::printf("artifacts in %s\n", out.string().c_str());
  return 0;
}

// ---------------------------------------------------- stage-1 artifact load

struct Stage1Bundle {
  SourceCodec codec;
  Param eps_raw;
  InterfaceSpec spec;
  CheckpointInfo info;
};

// Rebuild the frozen stage-1 model from a directory. Every mismatch between
// config, checkpoint and spec is fatal here, before any training time is
// spent.
Stage1Bundle load_stage1(const fs::path& dir, const ExperimentConfig& cfg,
                         const std::string& spec_override) {
  Stage1Bundle b;
  fs::path ckpt = dir / "stage1.ckpt";
  CheckpointInfo peek = peek_checkpoint(ckpt.string());
  if (peek.compat_hash != stage1_hash(cfg))
    fail(ErrorKind::artifact_mismatch,
         "stage-1 artifacts in " + dir.string() +
             " were trained under an incompatible config");

  Rng init_rng(0);  // placeholder values, the checkpoint overwrites them
  b.codec.init(cfg, init_rng);
  b.eps_raw.value = Mat::Zero(1, cfg.model.bits);
  nn::NamedParams named = b.codec.params();
  named.emplace_back("interface.eps_raw", &b.eps_raw);
  b.info = load_checkpoint(ckpt.string(), "stage1", named);

  std::string spec_path =
      spec_override.empty() ? (dir / "interface.spec").string() : spec_override;
  b.spec = load_spec(spec_path);
  if (b.spec.training_fingerprint != b.info.fingerprint)
    fail(ErrorKind::artifact_mismatch,
         "interface spec fingerprint does not match the stage-1 checkpoint (" +
             spec_path + ")");
  if (static_cast<int>(b.spec.bit_count()) != b.codec.bit_count())
    fail(ErrorKind::artifact_mismatch,
         "interface spec width does not match the stage-1 codec");
  return b;
}

// ------------------------------------------------------------ train-stage2

struct TrainStage2Args {
  std::string config;
  std::string stage1_dir;
  std::string interface_path;
  std::string ablation;
  std::string output;
  bool force = false;
};

int cmd_train_stage2(const TrainStage2Args& args) {
  ExperimentConfig cfg = load_config(args.config, data_root());
  if (!args.ablation.empty()) {
    cfg.ablation = args.ablation;
    (void)nn::ian_mode_from_string(cfg.ablation);
  }
  fs::path out = args.output.empty() ? fs::path(cfg.output_dir) / "stage2"
                                     : fs::path(args.output);
  fs::path ckpt = out / "stage2.ckpt";
  fs::path log_path = out / "stage2_log.jsonl";
  fs::path manifest_path = out / "manifest.json";
  for (const auto& p : {ckpt, log_path, manifest_path})
    ensure_fresh(p, args.force);

  Stage1Bundle s1 = load_stage1(args.stage1_dir, cfg, args.interface_path);
  fs::create_directories(out);

  DatasetHandle ds = load_dataset(cfg.dataset, data_root());
  Stage2Artifacts art = train_stage2(ds, s1.codec, s1.spec, cfg);

  CheckpointInfo info;
  info.kind = "stage2";
  info.config_hash = config_hash(cfg);
  info.compat_hash = stage1_hash(cfg);
  info.fingerprint = "stage2:" + hex64(info.config_hash) + ":" +
                     hex64(nn::params_checksum(art.codec.params()));
  save_checkpoint(ckpt.string(), info, art.codec.params());
  write_file(log_path.string(), stage2_log_jsonl(art.log));

  json manifest;
  manifest["command"] = "train-stage2";
  manifest["config"] = json::parse(canonical_json(cfg));
  manifest["config_hash"] = hex64(info.config_hash);
  manifest["stage1_hash"] = hex64(info.compat_hash);
  manifest["stage1_dir"] = args.stage1_dir;
  manifest["stage1_fingerprint"] = s1.info.fingerprint;
  manifest["fingerprint"] = info.fingerprint;
  manifest["ablation"] = cfg.ablation;
  manifest["artifacts"] = {{"checkpoint", "stage2.ckpt"},
                           {"log", "stage2_log.jsonl"}};
  write_file(manifest_path.string(), manifest.dump(2) + "\n");

  const Stage2LogEntry& last = art.log.back();
  std::printf("stage 2 done (%s, %s): loss %.6f\n", cfg.channel.c_str(),
              cfg.ablation.c_str(), last.loss);
  for (std::size_t i = 0; i < last.probe_snr.size(); ++i)
    std::printf("  val psnr @ %2.0f dB: %.2f dB\n", last.probe_snr[i],
                last.probe_psnr[i]);
  std::printf("artifacts in %s\n", out.string().c_str());
  return 0;
}

// ------------------------------------------------------- stage-2 model load

struct LoadedStage2 {
  ExperimentConfig cfg;
  Stage1Bundle s1;
  ChannelCodec channel;
  CheckpointInfo info;
  std::string dir;
};

std::unique_ptr<LoadedStage2> load_stage2(const fs::path& dir) {
  auto m = read_manifest(dir);
  if (!m.contains("config") || !m.contains("stage1_dir"))
    fail(ErrorKind::corrupted,
         "manifest lacks config/stage1_dir: " + dir.string());
  auto out = std::make_unique<LoadedStage2>();
  out->dir = dir.string();
  out->cfg = parse_config(m.at("config").dump(), data_root());
  out->s1 = load_stage1(m.at("stage1_dir").get<std::string>(), out->cfg, "");

  Rng init_rng(0);
  out->channel.init(out->cfg, nn::ian_mode_from_string(out->cfg.ablation),
                    init_rng);
  out->info = load_checkpoint((dir / "stage2.ckpt").string(), "stage2",
                              out->channel.params());
  if (out->info.compat_hash != stage1_hash(out->cfg))
    fail(ErrorKind::artifact_mismatch,
         "stage-2 checkpoint incompatible with its own manifest config: " +
             dir.string());
  return out;
}

Mat test_stack(const DatasetHandle& ds) {
  if (ds.test.empty()) fail(ErrorKind::validation, "dataset has no test split");
  std::vector<std::size_t> idx(ds.test.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return stack_images(ds.test, idx);
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string stage2_dir;
  double snr = 10.0;
  std::uint64_t seed = 1;
  std::string output;
  bool force = false;
};

int cmd_eval(const EvalArgs& args) {
  auto model = load_stage2(args.stage2_dir);
  if (!args.output.empty()) ensure_fresh(args.output, args.force);
  DatasetHandle ds = load_dataset(model->cfg.dataset, data_root());
  Mat images = test_stack(ds);

  SweepModel sm;
  sm.channel = model->cfg.channel;
  sm.cbr = model->cfg.cbr_target;
  sm.src = &model->s1.codec;
  sm.ch = &model->channel;
  sm.spec = &model->s1.spec;
  SweepGrid grid;
  grid.snrs_db = {args.snr};
  grid.seeds = {args.seed};
  SweepResult res = run_sweep({sm}, grid, images);

  std::string table = sweep_csv(res);
  std::fputs(table.c_str(), stdout);
  if (!args.output.empty()) {
    fs::path parent = fs::path(args.output).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    write_file(args.output, table);
  }
  return 0;
}

// ------------------------------------------------------------------- sweep

struct SweepArgs {
  std::vector<std::string> dirs;
  std::vector<double> snrs;
  std::vector<std::uint64_t> seeds = {1};
  std::string channel_filter;
  double cbr_filter = -1.0;
  std::string output;
  bool force = false;
};

int cmd_sweep(const SweepArgs& args) {
  fs::path out(args.output);
  for (const auto& name : {"sweep.csv", "records.csv", "sweep_manifest.json"})
    ensure_fresh(out / name, args.force);

  // fail up front with the complete list of unusable cells
  std::string missing;
  for (const auto& d : args.dirs) {
    if (!fs::exists(fs::path(d) / "manifest.json"))
      missing += "\n  " + d + ": no manifest.json";
    else if (!fs::exists(fs::path(d) / "stage2.ckpt"))
      missing += "\n  " + d + ": no stage2.ckpt";
  }
  if (!missing.empty())
    fail(ErrorKind::artifact_mismatch, "sweep: missing artifacts:" + missing);

  std::vector<std::unique_ptr<LoadedStage2>> models;
  std::vector<SweepModel> cells;
  json cell_meta = json::array();
  Mat images;
  for (const auto& d : args.dirs) {
    auto m = load_stage2(d);
    if (!args.channel_filter.empty() && m->cfg.channel != args.channel_filter)
      continue;
    if (args.cbr_filter >= 0.0 &&
        std::abs(m->cfg.cbr_target - args.cbr_filter) > 1e-9)
      continue;
    if (images.size() == 0) {
      DatasetHandle ds = load_dataset(m->cfg.dataset, data_root());
      images = test_stack(ds);
    }
    SweepModel sm;
    sm.channel = m->cfg.channel;
    sm.cbr = m->cfg.cbr_target;
    sm.src = &m->s1.codec;
    sm.ch = &m->channel;
    sm.spec = &m->s1.spec;
    cells.push_back(sm);
    cell_meta.push_back({{"dir", d},
                         {"channel", m->cfg.channel},
                         {"cbr", m->cfg.cbr_target},
                         {"ablation", m->cfg.ablation},
                         {"stage1_fingerprint", m->s1.info.fingerprint},
                         {"stage2_fingerprint", m->info.fingerprint}});
    models.push_back(std::move(m));
  }
  if (cells.empty())
    fail(ErrorKind::validation, "sweep: no cells left after filtering");

  SweepGrid grid;
  grid.snrs_db = args.snrs;
  grid.seeds = args.seeds;
  SweepResult res = run_sweep(cells, grid, images);

  fs::create_directories(out);
  write_file((out / "sweep.csv").string(), sweep_csv(res));
  write_file((out / "records.csv").string(), records_csv(res));
  json manifest;
  manifest["command"] = "sweep";
  manifest["snrs_db"] = grid.snrs_db;
  manifest["seeds"] = grid.seeds;
  manifest["cells"] = cell_meta;
  write_file((out / "sweep_manifest.json").string(), manifest.dump(2) + "\n");

  std::printf("%zu cells evaluated; tables in %s\n", res.cells.size(),
              out.string().c_str());
  return 0;
}

// ------------------------------------------------------------------ ablate

struct AblateArgs {
  std::string config;
  std::string stage1_dir;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string output;
  bool force = false;
};

int cmd_ablate(const AblateArgs& args) {
  ExperimentConfig cfg = load_config(args.config, data_root());
  fs::path out(args.output);
  for (const auto& name : {"ablation.csv", "ablation_manifest.json"})
    ensure_fresh(out / name, args.force);

  Stage1Bundle s1 = load_stage1(args.stage1_dir, cfg, "");
  DatasetHandle ds = load_dataset(cfg.dataset, data_root());
  AblationResult res = run_ablation(ds, s1.codec, s1.spec, cfg, args.seeds);

  fs::create_directories(out);
  std::string csv = ablation_csv(res);
  write_file((out / "ablation.csv").string(), csv);
  json manifest;
  manifest["command"] = "ablate";
  manifest["config"] = json::parse(canonical_json(cfg));
  manifest["stage1_dir"] = args.stage1_dir;
  manifest["stage1_fingerprint"] = s1.info.fingerprint;
  manifest["seeds"] = args.seeds;
  manifest["probes_db"] = res.probes_db;
  write_file((out / "ablation_manifest.json").string(), manifest.dump(2) + "\n");

  std::fputs(csv.c_str(), stdout);
  return 0;
}

// -------------------------------------------------------- export-interface

struct ExportArgs {
  std::string stage1_dir;
  std::string interface_path;
  std::string output;
  bool force = false;
};

int cmd_export_interface(const ExportArgs& args) {
  ensure_fresh(args.output, args.force);
  std::string src = args.interface_path.empty()
                        ? (fs::path(args.stage1_dir) / "interface.spec").string()
                        : args.interface_path;
  InterfaceSpec spec = load_spec(src);  // full validation pass
  fs::path parent = fs::path(args.output).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  save_spec(spec, args.output);
  double mean_eps = 0.0;
  for (double e : spec.epsilon) mean_eps += e;
  mean_eps /= static_cast<double>(spec.epsilon.size());
  std::printf("exported %zu-bit interface (mean eps %.4f) to %s\n",
              spec.bit_count(), mean_eps, args.output.c_str());
  return 0;
}

// -------------------------------------------------------------------- plot

struct PlotArgs {
  std::string input;
  std::string output;
  std::string channel_filter;
  double cbr_filter = -1.0;
  bool force = false;
};

struct Series {
  std::vector<std::pair<double, double>> points;  // (snr, mean psnr)
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string render_svg(const std::map<std::string, Series>& series) {
  const double W = 640, H = 420, x0 = 70, x1 = 610, y0 = 360, y1 = 40;
  double smin = 1e300, smax = -1e300, pmin = 1e300, pmax = -1e300;
  for (const auto& [_, s] : series)
    for (auto [x, y] : s.points) {
      smin = std::min(smin, x);
      smax = std::max(smax, x);
      pmin = std::min(pmin, y);
      pmax = std::max(pmax, y);
    }
  if (smax - smin < 1e-9) {
    smin -= 1.0;
    smax += 1.0;
  }
  if (pmax - pmin < 1e-9) {
    pmin -= 1.0;
    pmax += 1.0;
  }
  // a little headroom so markers stay inside the frame
  double ppad = 0.05 * (pmax - pmin);
  pmin -= ppad;
  pmax += ppad;
  auto sx = [&](double v) { return x0 + (v - smin) / (smax - smin) * (x1 - x0); };
  auto sy = [&](double v) { return y0 + (v - pmin) / (pmax - pmin) * (y1 - y0); };

  char buf[512];
  std::string svg;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" "
                "height=\"%g\" viewBox=\"0 0 %g %g\">\n"
                "<rect width=\"%g\" height=\"%g\" fill=\"white\"/>\n",
                W, H, W, H, W, H);
  svg += buf;
  // axes
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" "
                "stroke=\"black\"/>\n<line x1=\"%g\" y1=\"%g\" x2=\"%g\" "
                "y2=\"%g\" stroke=\"black\"/>\n",
                x0, y0, x1, y0, x0, y0, x0, y1);
  svg += buf;
  for (int i = 0; i <= 5; ++i) {
    double fx = smin + (smax - smin) * i / 5.0;
    double fy = pmin + (pmax - pmin) * i / 5.0;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" "
                  "stroke=\"black\"/>\n"
                  "<text x=\"%g\" y=\"%g\" font-size=\"12\" "
                  "text-anchor=\"middle\">%.1f</text>\n",
                  sx(fx), y0, sx(fx), y0 + 5, sx(fx), y0 + 20, fx);
    svg += buf;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" "
                  "stroke=\"black\"/>\n"
                  "<text x=\"%g\" y=\"%g\" font-size=\"12\" "
                  "text-anchor=\"end\">%.1f</text>\n",
                  x0 - 5, sy(fy), x0, sy(fy), x0 - 8, sy(fy) + 4, fy);
    svg += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%g\" y=\"%g\" font-size=\"14\" "
                "text-anchor=\"middle\">SNR (dB)</text>\n"
                "<text x=\"18\" y=\"%g\" font-size=\"14\" "
                "text-anchor=\"middle\" transform=\"rotate(-90 18 %g)\">PSNR "
                "(dB)</text>\n",
                (x0 + x1) / 2, H - 8, (y0 + y1) / 2, (y0 + y1) / 2);
  svg += buf;

  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#9467bd", "#ff7f0e", "#8c564b"};
  int ci = 0;
  double ly = y1 + 10;
  for (const auto& [label, s] : series) {
    const char* color = colors[ci % 6];
    std::string path = "M";
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%g %g", i ? " L" : "",
                    sx(s.points[i].first), sy(s.points[i].second));
      path += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<path d=\"%s\" fill=\"none\" stroke=\"%s\" "
                  "stroke-width=\"2\"/>\n",
                  path.c_str(), color);
    svg += buf;
    for (auto [x, y] : s.points) {
      std::snprintf(buf, sizeof buf,
                    "<circle cx=\"%g\" cy=\"%g\" r=\"3\" fill=\"%s\"/>\n",
                    sx(x), sy(y), color);
      svg += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%g\" y=\"%g\" width=\"14\" height=\"3\" "
                  "fill=\"%s\"/>\n<text x=\"%g\" y=\"%g\" "
                  "font-size=\"12\">%s</text>\n",
                  x0 + 12, ly, color, x0 + 32, ly + 5, label.c_str());
    svg += buf;
    ly += 18;
    ++ci;
  }
  svg += "</svg>\n";
  return svg;
}

int cmd_plot(const PlotArgs& args) {
  ensure_fresh(args.output, args.force);
  std::string text = read_file(args.input, "sweep table");
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      if (!cur.empty()) lines.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  if (lines.size() < 2)
    fail(ErrorKind::validation, "plot: table has no data rows: " + args.input);

  auto header = split_csv_line(lines[0]);
  auto col = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  int c_snr = col("snr_db"), c_psnr = col("mean_psnr");
  int c_chan = col("channel"), c_cbr = col("cbr");
  if (c_snr < 0 || c_psnr < 0)
    fail(ErrorKind::validation,
         "plot: table needs snr_db and mean_psnr columns: " + args.input);

  // average duplicate (series, snr) entries, e.g. over sweep seeds
  std::map<std::string, std::map<double, std::pair<double, int>>> acc;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = split_csv_line(lines[i]);
    if (f.size() < header.size())
      fail(ErrorKind::validation,
           "plot: short row " + std::to_string(i + 1) + " in " + args.input);
    std::string chan = c_chan >= 0 ? f[static_cast<std::size_t>(c_chan)] : "";
    std::string cbr_s = c_cbr >= 0 ? f[static_cast<std::size_t>(c_cbr)] : "";
    if (!args.channel_filter.empty() && !chan.empty() &&
        chan != args.channel_filter)
      continue;
    if (args.cbr_filter >= 0.0 && !cbr_s.empty() &&
        std::abs(std::stod(cbr_s) - args.cbr_filter) > 1e-9)
      continue;
    std::string label = chan.empty() ? "psnr" : chan;
    if (!cbr_s.empty()) label += " cbr=" + cbr_s;
    double snr = std::stod(f[static_cast<std::size_t>(c_snr)]);
    double psnr_v = std::stod(f[static_cast<std::size_t>(c_psnr)]);
    auto& slot = acc[label][snr];
    slot.first += psnr_v;
    slot.second += 1;
  }
  if (acc.empty())
    fail(ErrorKind::validation, "plot: no rows left after filtering");

  std::map<std::string, Series> series;
  for (auto& [label, by_snr] : acc) {
    Series s;
    for (auto& [snr, sum_n] : by_snr)
      s.points.emplace_back(snr, sum_n.first / sum_n.second);
    series[label] = std::move(s);
  }

  fs::path parent = fs::path(args.output).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  write_file(args.output, render_svg(series));
  std::printf("plot with %zu series written to %s\n", series.size(),
              args.output.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"split source/channel image transmission pipeline"};
  app.require_subcommand(1);

  TrainStage1Args s1;
  auto* c1 = app.add_subcommand("train-stage1",
                                "train source codec and interface (stage 1)");
  c1->add_option("--config", s1.config, "experiment config (json)")->required();
  c1->add_option("--output", s1.output, "artifact directory");
  c1->add_flag("--force", s1.force, "overwrite existing artifacts");

  TrainStage2Args s2;
  auto* c2 = app.add_subcommand("train-stage2",
                                "train channel codec against frozen stage 1");
  c2->add_option("--config", s2.config, "experiment config (json)")->required();
  c2->add_option("--stage1-dir", s2.stage1_dir, "stage-1 artifact directory")
      ->required();
  c2->add_option("--interface", s2.interface_path,
                 "interface spec path (default: stage1-dir/interface.spec)");
  c2->add_option("--ablation", s2.ablation,
                 "importance-stage variant: full, no-iattn or no-ian")
      ->check(CLI::IsMember({"full", "no-iattn", "no-ian"}));
  c2->add_option("--output", s2.output, "artifact directory");
  c2->add_flag("--force", s2.force, "overwrite existing artifacts");

  EvalArgs ev;
  auto* c3 = app.add_subcommand("eval", "single-cell evaluation on the test split");
  c3->add_option("--stage2-dir", ev.stage2_dir, "stage-2 artifact directory")
      ->required();
  c3->add_option("--snr", ev.snr, "evaluation SNR in dB");
  c3->add_option("--seed", ev.seed, "channel noise seed");
  c3->add_option("--output", ev.output, "write the table to this file");
  c3->add_flag("--force", ev.force, "overwrite an existing table");

  SweepArgs sw;
  auto* c4 = app.add_subcommand("sweep", "grid evaluation over SNRs and seeds");
  c4->add_option("dirs", sw.dirs, "stage-2 artifact directories")->required();
  c4->add_option("--snr", sw.snrs, "SNR grid in dB")->required()->delimiter(',');
  c4->add_option("--seed", sw.seeds, "noise seeds (default 1)")->delimiter(',');
  c4->add_option("--channel", sw.channel_filter, "keep only this channel")
      ->check(CLI::IsMember({"awgn", "rayleigh"}));
  c4->add_option("--cbr", sw.cbr_filter, "keep only this bandwidth ratio");
  c4->add_option("--output", sw.output, "output directory")->required();
  c4->add_flag("--force", sw.force, "overwrite existing tables");

  AblateArgs ab;
  auto* c5 = app.add_subcommand(
      "ablate", "train and score full/no-iattn/no-ian stage-2 variants");
  c5->add_option("--config", ab.config, "experiment config (json)")->required();
  c5->add_option("--stage1-dir", ab.stage1_dir, "stage-1 artifact directory")
      ->required();
  c5->add_option("--seed", ab.seeds, "training seeds (default 1 2 3)")->delimiter(',');
  c5->add_option("--output", ab.output, "output directory")->required();
  c5->add_flag("--force", ab.force, "overwrite existing tables");

  ExportArgs ex;
  auto* c6 = app.add_subcommand("export-interface",
                                "copy a validated interface spec elsewhere");
  c6->add_option("--stage1-dir", ex.stage1_dir, "stage-1 artifact directory");
  c6->add_option("--interface", ex.interface_path, "explicit spec path");
  c6->add_option("--output", ex.output, "destination file")->required();
  c6->add_flag("--force", ex.force, "overwrite the destination");

  PlotArgs pl;
  auto* c7 = app.add_subcommand("plot", "render a PSNR-vs-SNR sweep table");
  c7->add_option("input", pl.input, "sweep csv")->required();
  c7->add_option("--channel", pl.channel_filter, "keep only this channel")
      ->check(CLI::IsMember({"awgn", "rayleigh"}));
  c7->add_option("--cbr", pl.cbr_filter, "keep only this bandwidth ratio");
  c7->add_option("--output", pl.output, "svg destination")->required();
  c7->add_flag("--force", pl.force, "overwrite the destination");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // usage problems are config errors
  }

  try {
    if (c1->parsed()) return cmd_train_stage1(s1);
    if (c2->parsed()) return cmd_train_stage2(s2);
    if (c3->parsed()) return cmd_eval(ev);
    if (c4->parsed()) return cmd_sweep(sw);
    if (c5->parsed()) return cmd_ablate(ab);
    if (c6->parsed()) {
      if (ex.stage1_dir.empty() && ex.interface_path.empty())
        fail(ErrorKind::config,
             "export-interface needs --stage1-dir or --interface");
      return cmd_export_interface(ex);
    }
    if (c7->parsed()) return cmd_plot(pl);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
