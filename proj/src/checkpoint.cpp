#include "skyreg/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "skyreg/errors.hpp"

namespace skyreg {

namespace {

constexpr char kMagic[8] = {'S', 'K', 'Y', 'R', 'E', 'G', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void put_bytes(std::ostream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <class T>
void put(std::ostream& out, T v) {
  put_bytes(out, &v, sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put<uint32_t>(out, static_cast<uint32_t>(s.size()));
  put_bytes(out, s.data(), s.size());
}

void put_tensor(std::ostream& out, const Eigen::MatrixXd& t) {
  put<int32_t>(out, static_cast<int32_t>(t.rows()));
  put<int32_t>(out, static_cast<int32_t>(t.cols()));
  put_bytes(out, t.data(), sizeof(double) * t.size());
}

void get_bytes(std::istream& in, void* p, size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n) {
    throw CorruptCheckpoint("unexpected end of file");
  }
}

template <class T>
T get(std::istream& in) {
  T v;
  get_bytes(in, &v, sizeof(T));
  return v;
}

std::string get_string(std::istream& in) {
  const uint32_t n = get<uint32_t>(in);
  if (n > 1024) throw CorruptCheckpoint("implausible string length");
  std::string s(n, '\0');
  get_bytes(in, s.data(), n);
  return s;
}

Eigen::MatrixXd get_tensor(std::istream& in) {
  const int32_t rows = get<int32_t>(in);
  const int32_t cols = get<int32_t>(in);
  if (rows <= 0 || cols <= 0 || static_cast<int64_t>(rows) * cols > (1LL << 28)) {
    throw CorruptCheckpoint("implausible tensor shape");
  }
  Eigen::MatrixXd t(rows, cols);
  get_bytes(in, t.data(), sizeof(double) * t.size());
  return t;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open checkpoint for writing: " + path);

  put_bytes(out, kMagic, sizeof(kMagic));
  put<uint32_t>(out, kVersion);

  const ModelConfig& c = ckpt.params.config;
  put<uint32_t>(out, c.variant == Variant::Lstm ? 1u : 0u);
  put<int32_t>(out, c.input_size);
  put<int32_t>(out, c.hidden_dim);
  put<int32_t>(out, c.offset_dim);
  put<uint8_t>(out, c.center_inputs ? 1 : 0);
  put<int64_t>(out, ckpt.params.step_counter);

  const auto specs = tensor_specs(c);
  put<uint32_t>(out, static_cast<uint32_t>(specs.size()));
  for (size_t i = 0; i < specs.size(); ++i) {
    put_string(out, specs[i].name);
    put_tensor(out, ckpt.params.tensors[i]);
  }

  put<uint8_t>(out, ckpt.has_train_state ? 1 : 0);
  if (ckpt.has_train_state) {
    put<int64_t>(out, ckpt.iteration);
    for (size_t i = 0; i < specs.size(); ++i) put_tensor(out, ckpt.adam_m[i]);
    for (size_t i = 0; i < specs.size(); ++i) put_tensor(out, ckpt.adam_v[i]);
  }
  if (!out) throw Error("write failure on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptCheckpoint("cannot open checkpoint: " + path);

  char magic[8];
  get_bytes(in, magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CorruptCheckpoint("bad magic in " + path);
  }
  const uint32_t version = get<uint32_t>(in);
  if (version != kVersion) {
    throw CorruptCheckpoint("unsupported checkpoint version " + std::to_string(version));
  }

  Checkpoint ckpt;
  ModelConfig c;
  c.variant = get<uint32_t>(in) == 1u ? Variant::Lstm : Variant::Base;
  c.input_size = get<int32_t>(in);
  c.hidden_dim = get<int32_t>(in);
  c.offset_dim = get<int32_t>(in);
  c.center_inputs = get<uint8_t>(in) != 0;
  ckpt.params.config = c;
  ckpt.params.step_counter = get<int64_t>(in);

  const auto specs = tensor_specs(c);
  const uint32_t n = get<uint32_t>(in);
  if (n != specs.size()) throw CorruptCheckpoint("tensor count mismatch");
  ckpt.params.tensors.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    const std::string name = get_string(in);
    if (name != specs[i].name) throw CorruptCheckpoint("tensor name mismatch: " + name);
    Eigen::MatrixXd t = get_tensor(in);
    if (t.rows() != specs[i].rows || t.cols() != specs[i].cols) {
      throw CorruptCheckpoint("tensor shape mismatch for " + name);
    }
    ckpt.params.tensors.push_back(std::move(t));
  }

  ckpt.has_train_state = get<uint8_t>(in) != 0;
  if (ckpt.has_train_state) {
    ckpt.iteration = get<int64_t>(in);
    for (uint32_t i = 0; i < n; ++i) ckpt.adam_m.push_back(get_tensor(in));
    for (uint32_t i = 0; i < n; ++i) ckpt.adam_v.push_back(get_tensor(in));
    for (uint32_t i = 0; i < n; ++i) {
      if (ckpt.adam_m[i].rows() != specs[i].rows || ckpt.adam_m[i].cols() != specs[i].cols ||
          ckpt.adam_v[i].rows() != specs[i].rows || ckpt.adam_v[i].cols() != specs[i].cols) {
        throw CorruptCheckpoint("optimizer moment shape mismatch");
      }
    }
  }
  return ckpt;
}

}  // namespace skyreg
