#include "splitsc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace splitsc {

namespace {

constexpr double kPsnrCap = 100.0;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

double psnr_from_mse(double mse, double max_value) {
  if (max_value <= 0.0)
    fail(ErrorKind::validation, "psnr: max_value must be positive");
  if (mse < 0.0) fail(ErrorKind::validation, "psnr: negative mse");
  if (mse == 0.0) return kPsnrCap;
  double v = 10.0 * std::log10(max_value * max_value / mse);
  return std::min(v, kPsnrCap);
}

double psnr(const Image& a, const Image& b, double max_value) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    fail(ErrorKind::validation, "psnr: image shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    double d = a.pixels[i] - b.pixels[i];
    acc += d * d;
  }
  return psnr_from_mse(acc / static_cast<double>(a.pixels.size()), max_value);
}

double mean_sq_error(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail(ErrorKind::validation, "mse: shape mismatch");
  return (a - b).array().square().mean();
}

double mean_psnr(const Mat& a, const Mat& b, double max_value) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail(ErrorKind::validation, "psnr: shape mismatch");
  if (a.rows() == 0) fail(ErrorKind::validation, "psnr: empty batch");
  double acc = 0.0;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    double mse = (a.row(r) - b.row(r)).array().square().mean();
    acc += psnr_from_mse(mse, max_value);
  }
  return acc / static_cast<double>(a.rows());
}

double bit_error_rate(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail(ErrorKind::validation, "ber: shape mismatch");
  if (a.size() == 0) fail(ErrorKind::validation, "ber: empty input");
  std::size_t bad = 0;
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      if ((a(r, c) >= 0.5) != (b(r, c) >= 0.5)) ++bad;
  return static_cast<double>(bad) / static_cast<double>(a.size());
}

double bit_error_rate(const std::vector<std::uint8_t>& a,
                      const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size() || a.empty())
    fail(ErrorKind::validation, "ber: length mismatch or empty");
  std::size_t bad = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if ((a[i] != 0) != (b[i] != 0)) ++bad;
  return static_cast<double>(bad) / static_cast<double>(a.size());
}

std::vector<EvalRecord> evaluate_pipeline(SourceCodec& src, ChannelCodec& ch,
                                          const InterfaceSpec& spec,
                                          const Mat& images,
                                          const std::string& channel,
                                          double snr_db, Rng& rng) {
  const bool rayleigh = channel == "rayleigh";
  if (!rayleigh && channel != "awgn")
    fail(ErrorKind::config, "channel: unknown type '" + channel + "'");
  if (src.bit_count() != ch.bit_count())
    fail(ErrorKind::artifact_mismatch,
         "source and channel codecs disagree on interface width");
  const int B = static_cast<int>(images.rows());
  if (B == 0) fail(ErrorKind::validation, "evaluate: empty image batch");
  const int L = ch.symbol_count();

  Mat bits = binarize(src.encode_soft(images));
  Mat imp = ch.importance_tokens(spec);

  Mat cond_tx(B, 1);
  cond_tx.col(0).setConstant(snr_db / 10.0);
  ad::Graph gm;
  Mat x = gm.value(ch.map_forward(gm, gm.input(bits), cond_tx, imp));

  // the actual complex-valued channel, one block per image
  Mat y_eq(B, 2 * L);
  Mat cond_rx(B, 2);
  for (int i = 0; i < B; ++i) {
    ChannelSymbols cs;
    cs.symbols.resize(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l)
      cs.symbols[static_cast<std::size_t>(l)] = Cx(x(i, 2 * l), x(i, 2 * l + 1));
    cs.power = mean_power(cs.symbols);
    ChannelOutput out = rayleigh ? transmit_rayleigh(cs, snr_db, rng)
                                 : transmit_awgn(cs, snr_db, rng);
    std::vector<Cx> eq = equalize(out.y, out.state.h);
    for (int l = 0; l < L; ++l) {
      y_eq(i, 2 * l) = eq[static_cast<std::size_t>(l)].real();
      y_eq(i, 2 * l + 1) = eq[static_cast<std::size_t>(l)].imag();
    }
    cond_rx(i, 0) = snr_db / 10.0;
    cond_rx(i, 1) = std::abs(out.state.h);
  }

  ad::Graph gd;
  Mat probs = gd.value(ch.demap_forward(gd, gd.input(y_eq), cond_rx, imp));
  Mat bits_hat = binarize(probs);
  Mat rec = src.decode(bits_hat);

  std::vector<EvalRecord> records(static_cast<std::size_t>(B));
  for (int i = 0; i < B; ++i) {
    EvalRecord& r = records[static_cast<std::size_t>(i)];
    r.image_index = static_cast<std::size_t>(i);
    double mse = (images.row(i) - rec.row(i)).array().square().mean();
    r.psnr = psnr_from_mse(mse, 1.0);
    std::size_t bad = 0;
    for (Eigen::Index c = 0; c < bits.cols(); ++c)
      if (bits(i, c) != bits_hat(i, c)) ++bad;
    r.ber = static_cast<double>(bad) / static_cast<double>(bits.cols());
  }
  return records;
}

double mean_probe_psnr(SourceCodec& src, ChannelCodec& ch,
                       const InterfaceSpec& spec, const Mat& images,
                       const std::string& channel, double snr_db, Rng& rng) {
  auto records = evaluate_pipeline(src, ch, spec, images, channel, snr_db, rng);
  double acc = 0.0;
  for (auto& r : records) acc += r.psnr;
  return acc / static_cast<double>(records.size());
}

namespace {

void fill_aggregates(SweepCell& cell) {
  const double n = static_cast<double>(cell.records.size());
  double psnr_sum = 0.0, ber_sum = 0.0;
  for (auto& r : cell.records) {
    psnr_sum += r.psnr;
    ber_sum += r.ber;
  }
  cell.samples = cell.records.size();
  cell.mean_psnr = psnr_sum / n;
  cell.mean_ber = ber_sum / n;
  double var = 0.0;
  for (auto& r : cell.records) {
    double d = r.psnr - cell.mean_psnr;
    var += d * d;
  }
  cell.std_psnr = cell.records.size() > 1
                      ? std::sqrt(var / (n - 1.0))
                      : 0.0;
}

}  // namespace

SweepResult run_sweep(const std::vector<SweepModel>& models,
                      const SweepGrid& grid, const Mat& test_images) {
  if (models.empty() || grid.snrs_db.empty() || grid.seeds.empty())
    fail(ErrorKind::validation, "sweep: empty model list or grid");
  SweepResult result;
  for (const auto& m : models) {
    if (!m.src || !m.ch || !m.spec)
      fail(ErrorKind::validation, "sweep: incomplete model entry");
    for (double snr : grid.snrs_db)
      for (std::uint64_t seed : grid.seeds) {
        // one independent stream per cell, pinned by (seed, channel, snr)
        Rng cell_rng = Rng(seed)
                           .split(fnv1a64(m.channel))
                           .split(static_cast<std::uint64_t>(
                               std::llround(snr * 1000.0)));
        SweepCell cell;
        cell.channel = m.channel;
        cell.cbr = m.cbr;
        cell.snr_db = snr;
        cell.seed = seed;
        cell.records = evaluate_pipeline(*m.src, *m.ch, *m.spec, test_images,
                                         m.channel, snr, cell_rng);
        fill_aggregates(cell);
        result.cells.push_back(std::move(cell));
      }
  }
  return result;
}

std::string sweep_csv(const SweepResult& result) {
  std::string out = "channel,cbr,snr_db,seed,samples,mean_psnr,std_psnr,mean_ber\n";
  for (const auto& c : result.cells) {
    out += c.channel + "," + fmt(c.cbr) + "," + fmt(c.snr_db) + "," +
           std::to_string(c.seed) + "," + std::to_string(c.samples) + "," +
           fmt(c.mean_psnr) + "," + fmt(c.std_psnr) + "," + fmt(c.mean_ber) +
           "\n";
  }
  return out;
}

std::string records_csv(const SweepResult& result) {
  std::string out = "channel,cbr,snr_db,seed,image_index,psnr,ber\n";
  for (const auto& c : result.cells)
    for (const auto& r : c.records)
      out += c.channel + "," + fmt(c.cbr) + "," + fmt(c.snr_db) + "," +
             std::to_string(c.seed) + "," + std::to_string(r.image_index) +
             "," + fmt(r.psnr) + "," + fmt(r.ber) + "\n";
  return out;
}

AblationResult run_ablation(const DatasetHandle& ds, SourceCodec& frozen,
                            const InterfaceSpec& spec,
                            const ExperimentConfig& cfg,
                            const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) fail(ErrorKind::validation, "ablation: no seeds");
  AblationResult result;
  result.probes_db = {5.0, 10.0, 15.0, 20.0};
  result.seeds = seeds;

  std::size_t val_n = std::min<std::size_t>(
      ds.test.empty() ? 0 : ds.test.size(),
      static_cast<std::size_t>(cfg.training.val_images));
  if (val_n == 0) fail(ErrorKind::validation, "ablation: empty test split");
  std::vector<std::size_t> val_idx(val_n);
  for (std::size_t i = 0; i < val_n; ++i) val_idx[i] = i;
  Mat val_images = stack_images(ds.test, val_idx);

  for (const std::string mode : {"full", "no-iattn", "no-ian"}) {
    AblationArm arm;
    arm.mode = mode;
    for (std::uint64_t seed : seeds) {
      ExperimentConfig run = cfg;
      run.ablation = mode;
      run.seed = seed;
      Stage2Artifacts art = train_stage2(ds, frozen, spec, run);
      arm.trainable_params = nn::total_size(art.codec.params());
      std::vector<double> row;
      for (double p : result.probes_db) {
        // evaluation noise depends only on (seed, probe): every variant
        // sees the same channel realizations
        Rng eval_rng = Rng(seed).split(0xab1a7e).split(
            static_cast<std::uint64_t>(std::llround(p * 1000.0)));
        row.push_back(mean_probe_psnr(frozen, art.codec, spec, val_images,
                                      cfg.channel, p, eval_rng));
      }
      arm.probe_psnr.push_back(std::move(row));
    }
    arm.mean_probe_psnr.assign(result.probes_db.size(), 0.0);
    for (const auto& row : arm.probe_psnr)
      for (std::size_t j = 0; j < row.size(); ++j)
        arm.mean_probe_psnr[j] += row[j] / static_cast<double>(seeds.size());
    result.arms.push_back(std::move(arm));
  }
  return result;
}

std::string ablation_csv(const AblationResult& result) {
  std::string out = "mode,trainable_params,seed,snr_db,psnr\n";
  for (const auto& arm : result.arms) {
    for (std::size_t s = 0; s < result.seeds.size(); ++s)
      for (std::size_t j = 0; j < result.probes_db.size(); ++j)
        out += arm.mode + "," + std::to_string(arm.trainable_params) + "," +
               std::to_string(result.seeds[s]) + "," +
               fmt(result.probes_db[j]) + "," + fmt(arm.probe_psnr[s][j]) +
               "\n";
    for (std::size_t j = 0; j < result.probes_db.size(); ++j)
      out += arm.mode + "," + std::to_string(arm.trainable_params) +
             ",mean," + fmt(result.probes_db[j]) + "," +
             fmt(arm.mean_probe_psnr[j]) + "\n";
  }
  return out;
}

}  // namespace splitsc
