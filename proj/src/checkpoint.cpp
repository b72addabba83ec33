#include "ricl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ricl {

namespace {

constexpr char kMagic[] = "ATDPT1";
constexpr std::size_t kMagicLen = 6;
constexpr const char* kConfigName = "meta.config";

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <class T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("tensor file truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_tensor_file(const std::vector<TensorRecord>& records) {
  std::string out(kMagic, kMagicLen);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    if (r.name.size() > 0xFFFF) throw std::invalid_argument("tensor name too long");
    if (r.shape.size() > 0xFF) throw std::invalid_argument("tensor rank too large");
    std::uint64_t n = 1;
    for (auto d : r.shape) n *= d;
    if (n != r.values.size()) throw std::invalid_argument("tensor " + r.name + ": shape does not match value count");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(r.name.size()));
    out += r.name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(r.shape.size()));
    for (auto d : r.shape) put<std::uint64_t>(out, d);
    for (float v : r.values) put<float>(out, v);
  }
  return out;
}

std::vector<TensorRecord> decode_tensor_file(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(kMagicLen) != std::string(kMagic, kMagicLen)) throw std::runtime_error("bad tensor file magic");
  const auto count = in.get<std::uint32_t>();
  std::vector<TensorRecord> records(count);
  for (auto& r : records) {
    const auto len = in.get<std::uint16_t>();
    r.name = in.take(len);
    const auto rank = in.get<std::uint8_t>();
    std::uint64_t n = 1;
    for (int i = 0; i < rank; ++i) {
      r.shape.push_back(in.get<std::uint64_t>());
      n *= r.shape.back();
    }
    r.values.resize(n);
    for (auto& v : r.values) v = in.get<float>();
  }
  if (!in.done()) throw std::runtime_error("trailing bytes in tensor file");
  return records;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_tensor_file(const std::string& path, const std::vector<TensorRecord>& records) {
  write_file_atomic(path, encode_tensor_file(records));
}

std::vector<TensorRecord> read_tensor_file(const std::string& path) { return decode_tensor_file(read_file(path)); }

std::vector<TensorRecord> transformer_records(const Transformer& model) {
  const auto& c = model.config();
  std::vector<TensorRecord> out;
  out.push_back({kConfigName,
                 {7},
                 {static_cast<float>(c.num_layers), static_cast<float>(c.num_heads), static_cast<float>(c.embed_dim),
                  static_cast<float>(c.context_capacity), static_cast<float>(c.input_width),
                  static_cast<float>(c.output_width), c.learned_positions ? 1.0f : 0.0f}});
  for (const auto& t : model.params().tensors()) {
    TensorRecord r;
    r.name = t.name;
    r.shape.assign(t.shape.begin(), t.shape.end());
    r.values.assign(t.value.begin(), t.value.end());
    out.push_back(std::move(r));
  }
  return out;
}

Transformer transformer_from_records(const std::vector<TensorRecord>& records) {
  const TensorRecord* meta = nullptr;
  for (const auto& r : records)
    if (r.name == kConfigName) meta = &r;
  if (!meta || meta->values.size() != 7) throw std::runtime_error("checkpoint has no transformer config record");
  TransformerConfig cfg;
  cfg.num_layers = static_cast<int>(meta->values[0]);
  cfg.num_heads = static_cast<int>(meta->values[1]);
  cfg.embed_dim = static_cast<int>(meta->values[2]);
  cfg.context_capacity = static_cast<int>(meta->values[3]);
  cfg.input_width = static_cast<int>(meta->values[4]);
  cfg.output_width = static_cast<int>(meta->values[5]);
  cfg.learned_positions = meta->values[6] != 0.0f;
  Rng unused(0);
  Transformer model(cfg, unused);
  std::size_t matched = 0;
  for (const auto& r : records) {
    if (r.name == kConfigName) continue;
    Tensor& t = model.params().at(r.name);
    if (r.shape.size() != t.shape.size() || !std::equal(r.shape.begin(), r.shape.end(), t.shape.begin())) {
      throw std::runtime_error("checkpoint tensor " + r.name + " has the wrong shape");
    }
    t.value.assign(r.values.begin(), r.values.end());
    ++matched;
  }
  if (matched != model.params().tensors().size()) throw std::runtime_error("checkpoint is missing tensors");
  return model;
}

void save_transformer(const std::string& path, const Transformer& model) {
  write_tensor_file(path, transformer_records(model));
}

Transformer load_transformer(const std::string& path) { return transformer_from_records(read_tensor_file(path)); }

}  // namespace ricl
