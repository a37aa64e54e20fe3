#include "splitsc/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "splitsc/binio.hpp"

namespace splitsc {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'I', 'M', 'G', 'S', 'T', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// One synthetic image. Per channel: an affine ramp plus one low-frequency
// sinusoid; then 1-2 rectangles and 0-1 discs alpha-blended on top. Base
// levels and shape colors are symmetric around 0.5 so the corpus mean stays
// near the middle of the range.
Image synth_image(int height, int width, int channels, Rng& rng) {
  Image img;
  img.height = height;
  img.width = width;
  img.channels = channels;
  img.pixels.assign(static_cast<std::size_t>(height) * width * channels, 0.0);

  double inv_h = 1.0 / std::max(1, height - 1);
  double inv_w = 1.0 / std::max(1, width - 1);
  constexpr double tau = 2.0 * std::numbers::pi;

  std::vector<double> tone(static_cast<std::size_t>(channels), 0.5);
  for (int c = 0; c < channels; ++c) {
    double base = rng.uniform(0.1, 0.9);
    tone[static_cast<std::size_t>(c)] = base;
    double gx = rng.uniform(-0.8, 0.8);
    double gy = rng.uniform(-0.8, 0.8);
    double amp = rng.uniform(0.1, 0.4);
    double fx = rng.uniform(0.5, 2.0);
    double fy = rng.uniform(0.5, 2.0);
    double phase = rng.uniform(0.0, tau);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        double u = x * inv_w - 0.5;
        double v = y * inv_h - 0.5;
        img.at(y, x, c) = base + gx * u + gy * v +
                          amp * std::sin(tau * (fx * u + fy * v) + phase);
      }
  }

  int rects = 1 + static_cast<int>(rng.next_u64() % 2);
  for (int r = 0; r < rects; ++r) {
    int x0 = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(width));
    int x1 = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(width));
    int y0 = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(height));
    int y1 = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(height));
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    double alpha = rng.uniform(0.3, 0.7);
    std::vector<double> color(static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c)
      color[static_cast<std::size_t>(c)] =
          clamp01(tone[static_cast<std::size_t>(c)] + rng.uniform(-0.35, 0.35));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        for (int c = 0; c < channels; ++c)
          img.at(y, x, c) = (1.0 - alpha) * img.at(y, x, c) + alpha * color[c];
  }

  if (rng.bernoulli(0.5)) {
    double cx = rng.uniform(0.0, width - 1.0);
    double cy = rng.uniform(0.0, height - 1.0);
    double radius = rng.uniform(0.15, 0.4) * std::min(height, width);
    double alpha = rng.uniform(0.3, 0.7);
    std::vector<double> color(static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c)
      color[static_cast<std::size_t>(c)] =
          clamp01(tone[static_cast<std::size_t>(c)] + rng.uniform(-0.35, 0.35));
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        double dx = x - cx, dy = y - cy;
        if (dx * dx + dy * dy <= radius * radius)
          for (int c = 0; c < channels; ++c)
            img.at(y, x, c) = (1.0 - alpha) * img.at(y, x, c) + alpha * color[c];
      }
  }

  for (auto& p : img.pixels) p = clamp01(p);
  return img;
}

void append_pixels(std::string& out, const std::vector<Image>& images) {
  for (const Image& img : images)
    for (double p : img.pixels) put_f64(out, p);
}

std::vector<Image> read_pixels(BinReader& r, std::uint64_t count, int h, int w,
                               int c) {
  std::vector<Image> out(static_cast<std::size_t>(count));
  for (auto& img : out) {
    img.height = h;
    img.width = w;
    img.channels = c;
    img.pixels.resize(img.size());
    for (auto& p : img.pixels) p = r.f64();
  }
  return out;
}

std::vector<Image> load_cifar_file(const std::string& path) {
  std::string data = read_file(path, "cifar batch");
  constexpr std::size_t rec = 1 + 3 * 32 * 32;
  if (data.size() % rec != 0)
    fail(ErrorKind::corrupted, "cifar batch has partial record: " + path);
  std::vector<Image> out;
  out.reserve(data.size() / rec);
  for (std::size_t off = 0; off < data.size(); off += rec) {
    Image img;
    img.height = 32;
    img.width = 32;
    img.channels = 3;
    img.pixels.resize(img.size());
    // stored channel-planar (R plane, G plane, B plane), we keep interleaved
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
          unsigned char b = static_cast<unsigned char>(
              data[off + 1 + static_cast<std::size_t>(c) * 1024 + y * 32 + x]);
          img.at(y, x, c) = b / 255.0;
        }
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace

DatasetHandle make_synthetic(std::size_t n, int height, int width, int channels,
                             std::uint64_t seed) {
  if (n < 1) fail(ErrorKind::validation, "synthetic dataset: n must be >= 1");
  if (height < 1 || width < 1 || channels < 1)
    fail(ErrorKind::validation, "synthetic dataset: bad shape");
  DatasetHandle ds;
  ds.name = "synthetic";
  ds.height = height;
  ds.width = width;
  ds.channels = channels;
  ds.order_seed = seed;
  Rng base(seed);
  std::size_t test_count = n / 8;  // n=1 keeps its only image in train
  for (std::size_t i = 0; i < n; ++i) {
    Rng ri = base.split(i);  // per-image stream, independent of n
    Image img = synth_image(height, width, channels, ri);
    if (i < n - test_count)
      ds.train.push_back(std::move(img));
    else
      ds.test.push_back(std::move(img));
  }
  return ds;
}

DatasetHandle load_dataset(const DatasetSpec& spec, const std::string& root) {
  namespace fs = std::filesystem;
  auto resolve = [&](const std::string& p) -> std::string {
    if (p.empty() || fs::path(p).is_absolute() || root.empty()) return p;
    return (fs::path(root) / p).string();
  };

  DatasetHandle ds;
  if (spec.name == "synthetic") {
    ds = make_synthetic(spec.count, spec.height, spec.width, spec.channels,
                        spec.seed);
  } else if (spec.name == "container") {
    ds = load_container(resolve(spec.path));
  } else if (spec.name == "cifar10") {
    std::string dir = resolve(spec.path.empty() ? "cifar-10-batches-bin" : spec.path);
    ds.name = "cifar10";
    ds.height = 32;
    ds.width = 32;
    ds.channels = 3;
    ds.order_seed = spec.seed;
    for (int b = 1; b <= 5; ++b) {
      std::string p = dir + "/data_batch_" + std::to_string(b) + ".bin";
      auto batch = load_cifar_file(p);
      ds.train.insert(ds.train.end(), batch.begin(), batch.end());
    }
    auto testb = load_cifar_file(dir + "/test_batch.bin");
    ds.test = std::move(testb);
  } else {
    fail(ErrorKind::config, "unknown dataset name: " + spec.name);
  }
  ds.order_seed = spec.seed;

  if (spec.subsample > 0 && spec.subsample < ds.train.size()) {
    auto idx = subsample_indices(ds.train.size(), spec.subsample, spec.seed);
    std::vector<Image> kept;
    kept.reserve(idx.size());
    for (std::size_t i : idx) kept.push_back(std::move(ds.train[i]));
    ds.train = std::move(kept);
  }
  return ds;
}

void save_container(const std::string& path, const DatasetHandle& ds) {
  if (ds.train.empty() && ds.test.empty())
    fail(ErrorKind::validation, "refusing to cache an empty dataset");
  std::string payload;
  payload.reserve((ds.train.size() + ds.test.size()) *
                  static_cast<std::size_t>(ds.height) * ds.width * ds.channels * 8);
  append_pixels(payload, ds.train);
  append_pixels(payload, ds.test);

  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(ds.height));
  put_u32(out, static_cast<std::uint32_t>(ds.width));
  put_u32(out, static_cast<std::uint32_t>(ds.channels));
  put_u64(out, ds.train.size());
  put_u64(out, ds.test.size());
  put_u64(out, ds.order_seed);
  put_str(out, ds.name);
  put_u64(out, fnv1a64(payload.data(), payload.size()));
  out += payload;
  write_file(path, out);
}

DatasetHandle load_container(const std::string& path) {
  std::string data = read_file(path, "dataset container");
  BinReader r(data, "dataset container " + path);
  if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    fail(ErrorKind::corrupted, "not a dataset container: " + path);
  std::uint32_t version = r.u32();
  if (version != kFormatVersion)
    fail(ErrorKind::format_version,
         "unsupported dataset container version " + std::to_string(version) +
             ": " + path);
  DatasetHandle ds;
  ds.height = static_cast<int>(r.u32());
  ds.width = static_cast<int>(r.u32());
  ds.channels = static_cast<int>(r.u32());
  std::uint64_t train_count = r.u64();
  std::uint64_t test_count = r.u64();
  ds.order_seed = r.u64();
  ds.name = r.str();
  std::uint64_t checksum = r.u64();
  if (ds.height < 1 || ds.width < 1 || ds.channels < 1)
    fail(ErrorKind::validation, "dataset container has bad shape: " + path);

  std::size_t pix = static_cast<std::size_t>(ds.height) * ds.width * ds.channels;
  std::string payload =
      r.bytes(static_cast<std::size_t>(train_count + test_count) * pix * 8);
  if (fnv1a64(payload.data(), payload.size()) != checksum)
    fail(ErrorKind::corrupted, "dataset container checksum mismatch: " + path);
  BinReader pr(payload, "dataset payload " + path);
  ds.train = read_pixels(pr, train_count, ds.height, ds.width, ds.channels);
  ds.test = read_pixels(pr, test_count, ds.height, ds.width, ds.channels);
  return ds;
}

std::vector<std::size_t> subsample_indices(std::size_t total, std::size_t count,
                                           std::uint64_t seed) {
  if (count > total)
    fail(ErrorKind::validation, "subsample larger than population");
  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  Rng rng(seed);
  // partial Fisher-Yates: the first `count` slots become the sample
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.next_u64() % (total - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                     std::uint64_t epoch) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng = Rng(seed).split(0x9e0c ^ epoch);
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

Eigen::MatrixXd stack_images(const std::vector<Image>& images,
                             const std::vector<std::size_t>& idx) {
  if (idx.empty()) fail(ErrorKind::validation, "stack_images: empty batch");
  std::size_t dim = images[idx[0]].size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()),
                      static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const Image& img = images[idx[r]];
    if (img.size() != dim)
      fail(ErrorKind::validation, "stack_images: ragged image shapes");
    for (std::size_t k = 0; k < dim; ++k)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
          img.pixels[k];
  }
  return out;
}

}  // namespace splitsc
