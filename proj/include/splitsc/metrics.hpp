#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitsc/channel_codec.hpp"
#include "splitsc/data.hpp"
#include "splitsc/interface.hpp"
#include "splitsc/source_codec.hpp"

namespace splitsc {

// PSNR against a given peak value; identical inputs are capped at 100 dB
// instead of going to infinity.
double psnr_from_mse(double mse, double max_value);
double psnr(const Image& a, const Image& b, double max_value);

// Row-wise mean PSNR for batches stacked one image per row.
double mean_psnr(const Mat& a, const Mat& b, double max_value);

double mean_sq_error(const Mat& a, const Mat& b);

// Fraction of positions that disagree after thresholding both sides at 0.5.
double bit_error_rate(const Mat& a, const Mat& b);
double bit_error_rate(const std::vector<std::uint8_t>& a,
                      const std::vector<std::uint8_t>& b);

struct EvalRecord {
  std::size_t image_index = 0;
  double psnr = 0.0;
  double ber = 0.0;
};

// Full pipeline on a stack of images at one SNR: frozen encoder ->
// binarize -> map -> complex channel -> equalize -> demap -> threshold ->
// frozen decode. The channel leg runs through the actual complex-valued
// simulator, not the training-time shortcut.
std::vector<EvalRecord> evaluate_pipeline(SourceCodec& src, ChannelCodec& ch,
                                          const InterfaceSpec& spec,
                                          const Mat& images,
                                          const std::string& channel,
                                          double snr_db, Rng& rng);

double mean_probe_psnr(SourceCodec& src, ChannelCodec& ch,
                       const InterfaceSpec& spec, const Mat& images,
                       const std::string& channel, double snr_db, Rng& rng);

struct SweepCell {
  std::string channel;
  double cbr = 0.0;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  double mean_psnr = 0.0;
  double std_psnr = 0.0;
  double mean_ber = 0.0;
  std::vector<EvalRecord> records;
};

struct SweepResult {
  std::vector<SweepCell> cells;
};

struct SweepGrid {
  std::vector<double> snrs_db;
  std::vector<std::uint64_t> seeds;
};

// One trained stage-2 model plus everything needed to run it.
struct SweepModel {
  std::string channel;
  double cbr = 0.0;
  SourceCodec* src = nullptr;
  ChannelCodec* ch = nullptr;
  const InterfaceSpec* spec = nullptr;
};

// Cross product of models x grid. Aggregates are recomputed from the
// per-image records they summarize.
SweepResult run_sweep(const std::vector<SweepModel>& models,
                      const SweepGrid& grid, const Mat& test_images);

// Aggregate-table CSV (one row per cell) and the per-image long table.
std::string sweep_csv(const SweepResult& result);
std::string records_csv(const SweepResult& result);

struct AblationArm {
  std::string mode;
  std::size_t trainable_params = 0;
  // probe_psnr[seed][probe]
  std::vector<std::vector<double>> probe_psnr;
  std::vector<double> mean_probe_psnr;
};

struct AblationResult {
  std::vector<double> probes_db;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationArm> arms;
};

// Trains one stage-2 model per (variant, seed) against a shared frozen
// stage-1 codec and evaluates each at the probe SNRs on the test split.
AblationResult run_ablation(const DatasetHandle& ds, SourceCodec& frozen,
                            const InterfaceSpec& spec,
                            const ExperimentConfig& cfg,
                            const std::vector<std::uint64_t>& seeds);

std::string ablation_csv(const AblationResult& result);

}  // namespace splitsc
