#include "unirobust/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "unirobust/error.hpp"

namespace unirobust {

namespace {

constexpr std::array<char, 8> kMagic = {'U', 'N', 'I', 'R', 'O', 'B', 'S', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kNoWeightName = 255;

template <class T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), sizeof(T))) fail(ErrorCode::io, "truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void write_checkpoint(const Model& model, std::ostream& out) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kVersion);
  const auto& c = model.config();
  for (std::size_t v : {c.vocab_size, c.max_seq_len, c.hidden, c.expand, c.layers, c.heads, c.num_classes, c.token_types}) {
    put<std::uint64_t>(out, v);
  }
  const auto& params = model.parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(p.key.size()));
    out.write(p.key.data(), static_cast<std::streamsize>(p.key.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(p.kind));
    put<std::uint8_t>(out, p.weight ? static_cast<std::uint8_t>(*p.weight) : kNoWeightName);
    put<std::int32_t>(out, p.layer_index ? static_cast<std::int32_t>(*p.layer_index) : -1);
    put<std::uint8_t>(out, p.unitary_flag ? 1 : 0);
    const auto& shape = p.value.shape();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put<std::uint64_t>(out, d);
    for (double v : p.value.data()) put<double>(out, v);
  }
  if (!out) fail(ErrorCode::io, "failed writing checkpoint");
}

Model read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) fail(ErrorCode::io, "not a checkpoint file");
  if (const auto version = get<std::uint32_t>(in); version != kVersion) {
    fail(ErrorCode::io, "unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig c;
  for (std::size_t* field : {&c.vocab_size, &c.max_seq_len, &c.hidden, &c.expand, &c.layers, &c.heads, &c.num_classes,
                             &c.token_types}) {
    *field = static_cast<std::size_t>(get<std::uint64_t>(in));
  }
  Model model(c, 0);
  const auto count = get<std::uint32_t>(in);
  if (count != model.parameters().size()) {
    fail(ErrorCode::io, "checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                            std::to_string(model.parameters().size()));
  }
  for (std::uint32_t e = 0; e < count; ++e) {
    std::string key(get<std::uint16_t>(in), '\0');
    if (!in.read(key.data(), static_cast<std::streamsize>(key.size()))) fail(ErrorCode::io, "truncated checkpoint");
    Parameter* p = model.find(key);
    if (!p) fail(ErrorCode::io, "unknown checkpoint entry '" + key + "'");
    const auto kind = get<std::uint8_t>(in);
    const auto name = get<std::uint8_t>(in);
    const auto layer = get<std::int32_t>(in);
    const bool flag = get<std::uint8_t>(in) != 0;
    const bool consistent = kind == static_cast<std::uint8_t>(p->kind) &&
                            name == (p->weight ? static_cast<std::uint8_t>(*p->weight) : kNoWeightName) &&
                            layer == (p->layer_index ? static_cast<std::int32_t>(*p->layer_index) : -1) &&
                            flag == p->unitary_flag;
    if (!consistent) fail(ErrorCode::io, "checkpoint metadata mismatch for '" + key + "'");
    Shape shape(get<std::uint32_t>(in));
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in));
    if (shape != p->value.shape()) {
      fail(ErrorCode::io, "checkpoint shape " + shape_string(shape) + " for '" + key + "' does not match " +
                              shape_string(p->value.shape()));
    }
    for (auto& v : p->value.mutable_data()) v = get<double>(in);
  }
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open " + path.string() + " for writing");
  write_checkpoint(model, out);
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::stage_dependency, "missing checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace unirobust
