#include "bnnr/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace bnnr {
namespace {

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) { bytes(s.data(), s.size()); }

  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw ArchiveError("archive truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& Archive::at(const std::string& name) const {
  for (const ArchiveEntry& e : entries) {
    if (e.name == name) return e.tensor;
  }
  throw ArchiveError("archive has no entry '" + name + "'");
}

std::vector<std::uint8_t> encode_archive(const Archive& archive) {
  Writer w;
  w.bytes(kArchiveMagic, sizeof(kArchiveMagic));
  w.u32(kArchiveVersion);
  w.u32(static_cast<std::uint32_t>(archive.kind));
  w.u64(archive.metadata.size());
  w.str(archive.metadata);
  w.u64(archive.entries.size());
  for (const ArchiveEntry& e : archive.entries) {
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.str(e.name);
    w.u32(static_cast<std::uint32_t>(e.tensor.rank()));
    for (std::size_t d : e.tensor.shape()) w.u64(d);
    for (double v : e.tensor.values()) w.f64(v);
  }
  return w.take();
}

Archive decode_archive(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(sizeof(kArchiveMagic)) != std::string(kArchiveMagic, sizeof(kArchiveMagic))) {
    throw ArchiveError("not an archive: bad magic bytes");
  }
  const std::uint32_t version = r.u32();
  if (version != kArchiveVersion) {
    throw ArchiveError("unsupported archive version " + std::to_string(version) + " (expected " +
                       std::to_string(kArchiveVersion) + ")");
  }
  Archive archive;
  const std::uint32_t kind = r.u32();
  if (kind != static_cast<std::uint32_t>(ArchiveKind::model_checkpoint) &&
      kind != static_cast<std::uint32_t>(ArchiveKind::tensor_batch)) {
    throw ArchiveError("unknown archive kind " + std::to_string(kind));
  }
  archive.kind = static_cast<ArchiveKind>(kind);
  archive.metadata = r.str(r.u64());
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    ArchiveEntry e;
    e.name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    std::size_t total = 1;
    for (auto& d : shape) {
      d = r.u64();
      if (d == 0) throw ArchiveError("entry '" + e.name + "' has a zero dimension");
      total *= d;
    }
    r.need(total * 8);
    std::vector<double> data(total);
    for (double& v : data) v = r.f64();
    e.tensor = Tensor(std::move(shape), std::move(data));
    archive.entries.push_back(std::move(e));
  }
  if (!r.done()) throw ArchiveError("trailing bytes after archive entries");
  return archive;
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  const auto bytes = encode_archive(archive);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArchiveError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArchiveError("failed writing '" + path.string() + "'");
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_archive(bytes);
}

}  // namespace bnnr
