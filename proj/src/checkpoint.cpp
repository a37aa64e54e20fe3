#include "splitsc/checkpoint.hpp"

#include "splitsc/binio.hpp"

namespace splitsc {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'C', 'K', 'P', 'T', '\0', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

struct Header {
  CheckpointInfo info;
  std::string payload;
};

Header read_header(const std::string& path) {
  std::string data = read_file(path, "checkpoint");
  BinReader r(data, "checkpoint " + path);
  if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    fail(ErrorKind::corrupted, "not a checkpoint file: " + path);
  Header h;
  h.info.format_version = r.u32();
  if (h.info.format_version != kFormatVersion)
    fail(ErrorKind::format_version,
         "unsupported checkpoint version " +
             std::to_string(h.info.format_version) + ": " + path);
  h.info.kind = r.str();
  h.info.config_hash = r.u64();
  h.info.compat_hash = r.u64();
  h.info.fingerprint = r.str();
  std::uint64_t checksum = r.u64();
  h.payload = r.bytes(r.remaining());
  if (fnv1a64(h.payload.data(), h.payload.size()) != checksum)
    fail(ErrorKind::corrupted, "checkpoint checksum mismatch: " + path);
  return h;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointInfo& info,
                     const nn::NamedParams& params) {
  std::string payload;
  put_u64(payload, params.size());
  for (auto& [name, p] : params) {
    put_str(payload, name);
    put_u32(payload, static_cast<std::uint32_t>(p->value.rows()));
    put_u32(payload, static_cast<std::uint32_t>(p->value.cols()));
    for (Eigen::Index c = 0; c < p->value.cols(); ++c)
      for (Eigen::Index r = 0; r < p->value.rows(); ++r)
        put_f64(payload, p->value(r, c));
  }

  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kFormatVersion);
  put_str(out, info.kind);
  put_u64(out, info.config_hash);
  put_u64(out, info.compat_hash);
  put_str(out, info.fingerprint);
  put_u64(out, fnv1a64(payload.data(), payload.size()));
  out += payload;
  write_file(path, out);
}

CheckpointInfo load_checkpoint(const std::string& path,
                               const std::string& expect_kind,
                               const nn::NamedParams& into) {
  Header h = read_header(path);
  if (!expect_kind.empty() && h.info.kind != expect_kind)
    fail(ErrorKind::artifact_mismatch,
         "checkpoint kind '" + h.info.kind + "' where '" + expect_kind +
             "' was required: " + path);

  BinReader r(h.payload, "checkpoint payload " + path);
  std::uint64_t count = r.u64();
  if (count != into.size())
    fail(ErrorKind::artifact_mismatch,
         "checkpoint carries " + std::to_string(count) + " tensors, model has " +
             std::to_string(into.size()) + ": " + path);
  for (auto& [name, p] : into) {
    std::string got = r.str();
    if (got != name)
      fail(ErrorKind::artifact_mismatch,
           "checkpoint tensor '" + got + "' where '" + name +
               "' was expected: " + path);
    auto rows = static_cast<Eigen::Index>(r.u32());
    auto cols = static_cast<Eigen::Index>(r.u32());
    if (rows != p->value.rows() || cols != p->value.cols())
      fail(ErrorKind::artifact_mismatch,
           "checkpoint tensor '" + name + "' has shape " + std::to_string(rows) +
               "x" + std::to_string(cols) + ", model expects " +
               std::to_string(p->value.rows()) + "x" +
               std::to_string(p->value.cols()) + ": " + path);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index rr = 0; rr < rows; ++rr) p->value(rr, c) = r.f64();
  }
  return h.info;
}

CheckpointInfo peek_checkpoint(const std::string& path) {
  return read_header(path).info;
}

}  // namespace splitsc
