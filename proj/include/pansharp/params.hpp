/*
Copyright 2026 the pansharp authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "pansharp/tensor.hpp"

namespace pansharp {

// Named parameter set. std::map keeps iteration order stable, which makes
// checkpoints and update order deterministic.
template <class T>
struct ParamStore {
  std::map<std::string, Array<T>> tensors;

  Array<T>& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw ConfigError("params: missing tensor '" + name + "'");
    return it->second;
  }
  const Array<T>& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw ConfigError("params: missing tensor '" + name + "'");
    return it->second;
  }
  bool has(const std::string& name) const { return tensors.count(name) > 0; }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [k, v] : tensors) out.tensors.emplace(k, v.template cast<U>());
    return out;
  }
};

// Tape-mounted view of a ParamStore: every tensor inserted as a leaf.
template <class T>
struct MountedParams {
  std::map<std::string, typename Tape<T>::Id> ids;

  typename Tape<T>::Id at(const std::string& name) const {
    auto it = ids.find(name);
    if (it == ids.end())
      throw ConfigError("params: tensor '" + name + "' not mounted");
    return it->second;
  }
};

template <class T>
MountedParams<T> mount(Tape<T>& tp, const ParamStore<T>& ps,
                       bool trainable) {
  MountedParams<T> m;
  for (const auto& [k, v] : ps.tensors) m.ids.emplace(k, tp.value(v, trainable));
  return m;
}

// Standard Adam with bias correction.
template <class T>
struct AdamState {
  std::map<std::string, Array<T>> m, v;
  int64_t t = 0;
};

template <class T>
void adam_step(ParamStore<T>& params,
               const std::map<std::string, Array<T>>& grads, double lr,
               double beta1, double beta2, double eps, AdamState<T>& state) {
  if (lr <= 0) throw ConfigError("adam: learning rate must be positive");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(beta2, double(state.t));
  for (auto& [name, p] : params.tensors) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;  // frozen or unused this step
    const Array<T>& g = git->second;
    if (g.shape != p.shape)
      throw ConfigError("adam: gradient shape mismatch for '" + name + "'");
    auto& mv = state.m.try_emplace(name, Array<T>::zeros(p.shape)).first->second;
    auto& vv = state.v.try_emplace(name, Array<T>::zeros(p.shape)).first->second;
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double gi = double(g.data[i]);
      const double mi = beta1 * double(mv.data[i]) + (1.0 - beta1) * gi;
      const double vi = beta2 * double(vv.data[i]) + (1.0 - beta2) * gi * gi;
      mv.data[i] = T(mi);
      vv.data[i] = T(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      p.data[i] = T(double(p.data[i]) - lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

// ---------------------------------------------------------------------------
// "PANW" checkpoint container: magic, u32 tensor count, then per tensor
// { u32 name length, name bytes, u32 ndim, u32 dims..., f32 payload },
// everything little-endian. Bit-exact round trip.

namespace detail_ckpt {
inline void put_u32(std::string& out, uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
               char((v >> 24) & 0xff)};
  out.append(b, 4);
}
inline uint32_t get_u32(const std::string& s, size_t& off) {
  if (off + 4 > s.size())
    throw DataError("checkpoint: truncated at byte " + std::to_string(off));
  uint32_t v = uint32_t(uint8_t(s[off])) | uint32_t(uint8_t(s[off + 1])) << 8 |
               uint32_t(uint8_t(s[off + 2])) << 16 |
               uint32_t(uint8_t(s[off + 3])) << 24;
  off += 4;
  return v;
}
}  // namespace detail_ckpt

inline std::string checkpoint_bytes(const ParamStore<float>& ps) {
  using detail_ckpt::put_u32;
  std::string out = "PANW";
  put_u32(out, uint32_t(ps.tensors.size()));
  for (const auto& [name, t] : ps.tensors) {
    put_u32(out, uint32_t(name.size()));
    out += name;
    put_u32(out, uint32_t(t.shape.size()));
    for (int d : t.shape) put_u32(out, uint32_t(d));
    static_assert(sizeof(float) == 4);
    const size_t base = out.size();
    out.resize(base + t.data.size() * 4);
    std::memcpy(out.data() + base, t.data.data(), t.data.size() * 4);
  }
  return out;
}

inline void save_checkpoint(const ParamStore<float>& ps,
                            const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot open '" + path + "' for write");
  const std::string bytes = checkpoint_bytes(ps);
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw DataError("checkpoint: write failed for '" + path + "'");
}

inline ParamStore<float> load_checkpoint(const std::string& path) {
  using detail_ckpt::get_u32;
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot open '" + path + "'");
  std::string s((std::istreambuf_iterator<char>(f)),
                std::istreambuf_iterator<char>());
  size_t off = 0;
  if (s.size() < 4 || s.compare(0, 4, "PANW") != 0)
    throw DataError("checkpoint: bad magic at byte 0 in '" + path + "'");
  off = 4;
  const uint32_t count = get_u32(s, off);
  ParamStore<float> ps;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t nlen = get_u32(s, off);
    if (off + nlen > s.size())
      throw DataError("checkpoint: truncated name at byte " +
                      std::to_string(off));
    std::string name = s.substr(off, nlen);
    off += nlen;
    const uint32_t ndim = get_u32(s, off);
    if (ndim > 8)
      throw DataError("checkpoint: implausible rank at byte " +
                      std::to_string(off - 4));
    Shape shape(ndim);
    int64_t numel = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      shape[d] = int(get_u32(s, off));
      if (shape[d] <= 0 || numel > (int64_t(1) << 31) / shape[d])
        throw DataError("checkpoint: dimension overflow at byte " +
                        std::to_string(off - 4));
      numel *= shape[d];
    }
    if (off + size_t(numel) * 4 > s.size())
      throw DataError("checkpoint: truncated payload at byte " +
                      std::to_string(off));
    std::vector<float> data(size_t{uint64_t(numel)});
    std::memcpy(data.data(), s.data() + off, size_t(numel) * 4);
    off += size_t(numel) * 4;
    ps.tensors.emplace(std::move(name), Array<float>(shape, std::move(data)));
  }
  if (off != s.size())
    throw DataError("checkpoint: trailing bytes at " + std::to_string(off));
  return ps;
}

}  // namespace pansharp
