// Copyright 2026 The vapnev Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "vapnev/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <unordered_map>

#include "vapnev/config.hpp"
#include "vapnev/errors.hpp"

namespace vapnev {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in host order, which must be little-endian");

constexpr char kMagic[4] = {'V', 'P', 'N', 'V'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void integer(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void string(const std::string& s) {
    integer<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& out() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  const std::uint8_t* take(std::size_t n) {
    if (n > in_.size() - pos_) throw FormatError("checkpoint truncated");
    const std::uint8_t* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename U>
  U integer() {
    const std::uint8_t* p = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
    return v;
  }
  std::string string() {
    const auto n = integer<std::uint64_t>();
    const auto* p = take(static_cast<std::size_t>(n));
    return std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(n));
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

std::size_t element_size(DType d) { return d == DType::kFloat32 ? 4 : 8; }

template <typename T>
constexpr DType dtype_of() {
  return std::is_same_v<T, float> ? DType::kFloat32 : DType::kFloat64;
}

template <typename T>
NamedTensor pack(const std::string& name, const Tensor<T>& t) {
  NamedTensor nt{name, dtype_of<T>(), t.shape(), std::vector<std::uint8_t>(t.size() * sizeof(T))};
  if (!t.storage().empty()) std::memcpy(nt.data.data(), t.storage().data(), nt.data.size());
  return nt;
}

template <typename T>
Tensor<T> unpack(const NamedTensor& nt) {
  const std::size_t n = shape_volume(nt.shape);
  if (nt.data.size() != n * element_size(nt.dtype)) {
    throw FormatError("tensor '" + nt.name + "' has the wrong byte length");
  }
  Tensor<T> out(nt.shape);
  for (std::size_t i = 0; i < n; ++i) {
    if (nt.dtype == DType::kFloat32) {
      float v;
      std::memcpy(&v, nt.data.data() + 4 * i, 4);
      out[i] = static_cast<T>(v);
    } else {
      double v;
      std::memcpy(&v, nt.data.data() + 8 * i, 8);
      out[i] = static_cast<T>(v);
    }
  }
  return out;
}

bool all_finite(const NamedTensor& nt) {
  const std::size_t n = shape_volume(nt.shape);
  for (std::size_t i = 0; i < n; ++i) {
    double v;
    if (nt.dtype == DType::kFloat32) {
      float f;
      std::memcpy(&f, nt.data.data() + 4 * i, 4);
      v = f;
    } else {
      std::memcpy(&v, nt.data.data() + 8 * i, 8);
    }
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelCheckpoint& c) {
  Writer w;
  w.bytes(kMagic, 4);
  w.integer<std::uint32_t>(c.version);
  w.string(c.config);
  w.string(c.rng_state);
  w.integer<std::uint64_t>(c.step);
  w.integer<std::uint64_t>(c.adam_t);
  w.integer<std::uint32_t>(static_cast<std::uint32_t>(c.tensors.size()));
  std::uint64_t offset = 0;
  std::set<std::string> names;
  for (const NamedTensor& t : c.tensors) {
    if (!names.insert(t.name).second) throw ContractError("duplicate tensor name '" + t.name + "'");
    if (t.data.size() != shape_volume(t.shape) * element_size(t.dtype)) {
      throw ContractError("tensor '" + t.name + "' has the wrong byte length");
    }
    w.integer<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.integer<std::uint8_t>(static_cast<std::uint8_t>(t.dtype));
    w.integer<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) w.integer<std::uint64_t>(d);
    w.integer<std::uint64_t>(offset);
    w.integer<std::uint64_t>(t.data.size());
    offset += t.data.size();
  }
  for (const NamedTensor& t : c.tensors) w.bytes(t.data.data(), t.data.size());
  return std::move(w.out());
}

ModelCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(4), kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  ModelCheckpoint c;
  c.version = r.integer<std::uint32_t>();
  if (c.version != ModelCheckpoint::kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(c.version));
  }
  c.config = r.string();
  c.rng_state = r.string();
  c.step = r.integer<std::uint64_t>();
  c.adam_t = r.integer<std::uint64_t>();
  const auto count = r.integer<std::uint32_t>();
  struct Entry { std::uint64_t offset, length; };
  std::vector<Entry> entries;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = r.integer<std::uint32_t>();
    t.name.assign(reinterpret_cast<const char*>(r.take(name_len)), name_len);
    if (!names.insert(t.name).second) throw FormatError("duplicate tensor name '" + t.name + "'");
    const auto dtype = r.integer<std::uint8_t>();
    if (dtype > 1) throw FormatError("unknown dtype for '" + t.name + "'");
    t.dtype = static_cast<DType>(dtype);
    const auto rank = r.integer<std::uint32_t>();
    if (rank > 8) throw FormatError("implausible rank for '" + t.name + "'");
    for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(r.integer<std::uint64_t>());
    const Entry e{r.integer<std::uint64_t>(), r.integer<std::uint64_t>()};
    if (e.length != shape_volume(t.shape) * element_size(t.dtype)) {
      throw FormatError("tensor '" + t.name + "' length does not match its shape");
    }
    entries.push_back(e);
    c.tensors.push_back(std::move(t));
  }
  const std::size_t payload = r.pos();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Entry& e = entries[i];
    if (e.offset > bytes.size() - payload || e.length > bytes.size() - payload - e.offset) {
      throw FormatError("checkpoint truncated in tensor '" + c.tensors[i].name + "'");
    }
    const auto* p = bytes.data() + payload + e.offset;
    c.tensors[i].data.assign(p, p + e.length);
  }
  return c;
}

void save_checkpoint(const ModelCheckpoint& c, const std::filesystem::path& path) {
  for (const NamedTensor& t : c.tensors) {
    if (!all_finite(t)) throw ContractError("tensor '" + t.name + "' is not finite");
  }
  const auto bytes = serialize_checkpoint(c);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

template <typename T>
ModelCheckpoint capture_checkpoint(Trainer<T>& trainer) {
  ModelCheckpoint c;
  c.config = to_canonical_text(trainer.config());
  c.rng_state = trainer.rng().state();
  c.step = trainer.steps_done();
  const AdamState<T>& adam = trainer.adam();
  c.adam_t = adam.t;
  const ParamList<T> params = trainer.model().parameters();
  for (Parameter<T>* p : params) c.tensors.push_back(pack(p->name, p->value));
  if (!adam.m.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      c.tensors.push_back(pack("adam.m/" + params[i]->name, adam.m[i]));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      c.tensors.push_back(pack("adam.v/" + params[i]->name, adam.v[i]));
    }
  }
  return c;
}

template <typename T>
std::unique_ptr<Trainer<T>> restore_trainer(const ModelCheckpoint& c) {
  std::unique_ptr<Trainer<T>> trainer;
  try {
    trainer = std::make_unique<Trainer<T>>(parse_config_text(c.config));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const NamedTensor& t : c.tensors) by_name[t.name] = &t;
  const ParamList<T> params = trainer->model().parameters();
  auto fetch = [&](const std::string& name, const Shape& shape) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint lacks tensor '" + name + "'");
    if (it->second->shape != shape) {
      throw FormatError("tensor '" + name + "' has shape " + shape_string(it->second->shape) +
                        ", config expects " + shape_string(shape));
    }
    return unpack<T>(*it->second);
  };
  std::vector<Tensor<T>> values;
  for (Parameter<T>* p : params) values.push_back(fetch(p->name, p->value.shape()));
  const bool has_moments =
      !params.empty() && by_name.count("adam.m/" + params.front()->name) > 0;
  const std::size_t expected = params.size() * (has_moments ? 3 : 1);
  if (c.tensors.size() != expected) {
    throw FormatError("checkpoint holds " + std::to_string(c.tensors.size()) +
                      " tensors, config implies " + std::to_string(expected));
  }
  AdamState<T> adam;
  adam.t = c.adam_t;
  if (has_moments) {
    for (Parameter<T>* p : params) adam.m.push_back(fetch("adam.m/" + p->name, p->value.shape()));
    for (Parameter<T>* p : params) adam.v.push_back(fetch("adam.v/" + p->name, p->value.shape()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = std::move(values[i]);
  trainer->adam() = std::move(adam);
  trainer->rng().set_state(c.rng_state);
  trainer->set_steps_done(c.step);
  return trainer;
}

template ModelCheckpoint capture_checkpoint<float>(Trainer<float>&);
template ModelCheckpoint capture_checkpoint<double>(Trainer<double>&);
template std::unique_ptr<Trainer<float>> restore_trainer<float>(const ModelCheckpoint&);
template std::unique_ptr<Trainer<double>> restore_trainer<double>(const ModelCheckpoint&);

}  // namespace vapnev
