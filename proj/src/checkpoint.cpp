// Copyright 2026 The mat-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mat/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mat/errors.hpp"

namespace mat::checkpoint {
namespace {

namespace fs = std::filesystem;
constexpr char kMagic[8] = {'M', 'A', 'T', 'C', 'K', 'P', 'T', '1'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    out_.append(static_cast<const char*>(p), n);
  }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void str(std::string_view s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void vec(std::span<const double> v) {
    u64(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }
  void tensors(std::span<const Parameter> ps) {
    u64(ps.size());
    for (const auto& p : ps) {
      str(p.name);
      u64(p.value.rank());
      for (std::size_t d : p.value.shape()) u64(d);
      raw(p.value.values().data(), p.value.size() * sizeof(double));
    }
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  void raw(void* p, std::size_t n) {
    if (n > in_.size() - pos_) throw FormatError("checkpoint is truncated");
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    raw(&v, sizeof v);
    return v;
  }
  // Guards allocations against corrupt lengths.
  std::size_t count(std::size_t unit) {
    const std::uint64_t n = u64();
    if (unit != 0 && n > (in_.size() - pos_) / unit) {
      throw FormatError("checkpoint is truncated");
    }
    return static_cast<std::size_t>(n);
  }
  std::string str() {
    std::string s(count(1), '\0');
    raw(s.data(), s.size());
    return s;
  }
  std::vector<double> vec() {
    std::vector<double> v(count(sizeof(double)));
    raw(v.data(), v.size() * sizeof(double));
    return v;
  }
  std::vector<Parameter> tensors() {
    std::vector<Parameter> out(count(1));
    for (auto& p : out) {
      p.name = str();
      ad::Shape shape(count(sizeof(std::uint64_t)));
      for (auto& d : shape) d = static_cast<std::size_t>(u64());
      std::size_t n = 1;
      for (std::size_t d : shape) {
        if (d != 0 && n > (in_.size() - pos_) / sizeof(double) / d) {
          throw FormatError("checkpoint is truncated");
        }
        n *= d;
      }
      std::vector<double> v(n);
      raw(v.data(), n * sizeof(double));
      p.value = ad::Tensor(std::move(shape), std::move(v));
    }
    return out;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::vector<Parameter> to_vector(const ParameterSet& ps) {
  return {ps.begin(), ps.end()};
}

}  // namespace

std::string encode(const Checkpoint& c) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  const std::uint32_t version = kVersion;
  w.raw(&version, sizeof version);
  w.str(c.config_text);
  w.u64(c.state.iteration);
  w.u64(c.state.env_steps);
  w.u64(c.state.policy_epochs);
  w.f64(c.state.last_mean_return);
  w.str(c.state.master_rng);
  w.u64(c.state.env_rngs.size());
  for (const auto& r : c.state.env_rngs) w.str(r);
  w.tensors(c.params);
  w.tensors(c.target);
  w.u64(c.adam_steps);
  w.u64(c.adam_m.size());
  for (std::size_t i = 0; i < c.adam_m.size(); ++i) {
    w.vec(c.adam_m[i]);
    w.vec(c.adam_v[i]);
  }
  return w.take();
}

Checkpoint decode(std::string_view bytes) {
  Reader r(bytes);
  char magic[sizeof kMagic];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  std::uint32_t version = 0;
  r.raw(&version, sizeof version);
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version));
  }
  Checkpoint c;
  c.config_text = r.str();
  c.state.iteration = r.u64();
  c.state.env_steps = r.u64();
  c.state.policy_epochs = r.u64();
  c.state.last_mean_return = r.f64();
  c.state.master_rng = r.str();
  c.state.env_rngs.resize(r.count(sizeof(std::uint64_t)));
  for (auto& s : c.state.env_rngs) s = r.str();
  c.params = r.tensors();
  c.target = r.tensors();
  c.adam_steps = r.u64();
  const std::size_t n = r.count(2 * sizeof(std::uint64_t));
  for (std::size_t i = 0; i < n; ++i) {
    c.adam_m.push_back(r.vec());
    c.adam_v.push_back(r.vec());
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  return c;
}

void save(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = encode(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
  }
  fs::rename(tmp, path);
}

Checkpoint load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode(ss.str());
}

Checkpoint capture(const training::Trainer& trainer,
                   const std::string& config_text) {
  Checkpoint c;
  c.config_text = config_text;
  c.state = trainer.state();
  c.params = to_vector(trainer.model().params());
  c.target = to_vector(trainer.model().target());
  c.adam_steps = trainer.optimizer().steps();
  c.adam_m = trainer.optimizer().first_moments();
  c.adam_v = trainer.optimizer().second_moments();
  return c;
}

void restore(const Checkpoint& c, training::Trainer& trainer) {
  assign(trainer.model().params(), c.params);
  assign(trainer.model().target(), c.target);
  trainer.optimizer().restore(c.adam_steps, c.adam_m, c.adam_v);
  trainer.restore(c.state);
}

void assign(ParameterSet& dst, std::span<const Parameter> src) {
  for (const auto& p : src) {
    if (!dst.contains(p.name)) {
      throw FormatError("architecture mismatch: checkpoint tensor '" +
                        p.name + "' does not exist in the model");
    }
    const auto& mine = dst.get(p.name);
    if (mine.shape() != p.value.shape()) {
      throw FormatError("architecture mismatch: tensor '" + p.name +
                        "' has shape " + ad::to_string(p.value.shape()) +
                        " in the checkpoint but " +
                        ad::to_string(mine.shape()) + " in the model");
    }
  }
  for (const auto& p : dst) {
    const bool found = std::any_of(src.begin(), src.end(), [&](const auto& q) {
      return q.name == p.name;
    });
    if (!found) {
      throw FormatError("architecture mismatch: model tensor '" + p.name +
                        "' is missing from the checkpoint");
    }
  }
  for (const auto& p : src) dst.set(p.name, p.value);
}

std::string file_name(std::size_t iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%06zu.bin", iteration);
  return buf;
}

std::vector<std::string> list(const std::string& dir) {
  std::vector<std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with("ckpt_") && name.ends_with(".bin")) {
      out.push_back(entry.path().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void prune(const std::string& dir, std::size_t keep) {
  auto files = list(dir);
  if (files.size() <= keep) return;
  for (std::size_t i = 0; i + keep < files.size(); ++i) fs::remove(files[i]);
}

}  // namespace mat::checkpoint
