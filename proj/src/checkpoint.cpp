#include "hfz/errors.hpp"
#include "hfz/models.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hfz {
namespace {

constexpr std::string_view kMagic = "HFZ1";

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

void put_u64(std::string& out, std::uint64_t v) {
  v = to_little(v);
  out.append(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  put_u64(out, bits);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint64_t u64(const char* what) {
    need(sizeof(std::uint64_t), what);
    std::uint64_t v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(v));
    pos_ += sizeof(v);
    return to_little(v);
  }

  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

  std::string_view take(std::uint64_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::uint64_t n, const char* what) {
    if (n > bytes_.size() - pos_) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const ModelParams& params) {
  std::string out(kMagic);
  for (const auto& e : params.entries()) {
    put_u64(out, e.name.size());
    out += e.name;
    put_u64(out, e.tensor.shape.size());
    for (Index d : e.tensor.shape) put_u64(out, static_cast<std::uint64_t>(d));
    for (Index i = 0; i < e.tensor.size(); ++i) put_f64(out, e.tensor.data(i));
  }
  return out;
}

ModelParams decode_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, kMagic.size()) != kMagic) {
    throw FormatError("checkpoint: missing HFZ1 header");
  }
  Reader in(bytes.substr(kMagic.size()));
  ModelParams params;
  while (!in.done()) {
    const std::uint64_t name_len = in.u64("name length");
    std::string name(in.take(name_len, "name"));
    const std::uint64_t rank = in.u64("rank");
    if (rank == 0 || rank > 16) {
      throw FormatError("checkpoint: entry '" + name + "' has invalid rank " + std::to_string(rank));
    }
    std::vector<Index> shape;
    std::uint64_t count = 1;
    for (std::uint64_t r = 0; r < rank; ++r) {
      const std::uint64_t d = in.u64("dimension");
      if (d == 0 || d > (std::uint64_t{1} << 40)) {
        throw FormatError("checkpoint: entry '" + name + "' has invalid dimension");
      }
      count *= d;
      shape.push_back(static_cast<Index>(d));
    }
    if (count > (bytes.size() / sizeof(double))) {
      throw FormatError("checkpoint: entry '" + name + "' larger than file");
    }
    Tensor t(shape);
    for (std::uint64_t i = 0; i < count; ++i) t.data(static_cast<Index>(i)) = in.f64("values");
    try {
      params.add(std::move(name), std::move(t));
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("checkpoint: ") + e.what());
    }
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const std::string bytes = encode_checkpoint(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_checkpoint(buffer.str());
}

}  // namespace hfz
