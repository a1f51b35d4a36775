#include "seflow/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "seflow/errors.hpp"

namespace seflow {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'F', 'L', 'O', 'W', '0', '1'};

struct Writer {
  std::string buf;

  void u8(std::uint8_t v) { buf.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    u32(u);
  }
  void f64(double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    u64(u);
  }
  void f32_array(const float* p, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) f32(p[j]);
  }
};

struct Reader {
  const unsigned char* p;
  std::size_t size;
  std::size_t off = 0;

  void need(std::size_t n) const {
    if (off + n > size)
      throw DataError(detail::strfmt("checkpoint truncated at byte %zu (need %zu more, have %zu)",
                                     off, n, size - off));
  }
  std::uint8_t u8() {
    need(1);
    return p[off++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p[off] | p[off + 1] << 8);
    off += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[off + i]) << (8 * i);
    off += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[off + i]) << (8 * i);
    off += 8;
    return v;
  }
  float f32() {
    const std::uint32_t u = u32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
  double f64() {
    const std::uint64_t u = u64();
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p + off), n);
    off += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(std::ostream& out, const FlowModel<float>& model, const TrainState* state) {
  Writer w;
  w.buf.append(kMagic, sizeof(kMagic));
  const FlowConfig& c = model.config();
  for (int v : {c.n_blocks, c.group_size, c.early_every, c.early_channels, c.wn_layers,
                c.residual_channels, c.skip_channels, c.kernel_size})
    w.u32(static_cast<std::uint32_t>(v));
  w.f64(c.sigma_train);
  w.f64(c.sigma_infer);
  w.u8(model.companded ? 1 : 0);
  w.f64(model.mu);

  const auto params = model.named_parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    if (name.size() > 0xffff) throw Error("parameter name too long for the container");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.buf.append(name);
    const Shape sh = t.shape();
    w.u32(static_cast<std::uint32_t>(sh.batch));
    w.u32(static_cast<std::uint32_t>(sh.channels));
    w.u32(static_cast<std::uint32_t>(sh.time));
    w.f32_array(t.data(), t.numel());
  }

  w.u8(state ? 1 : 0);
  if (state) {
    if (state->m.size() != params.size() || state->v.size() != params.size())
      throw Error(detail::strfmt("train state holds moments for %zu/%zu tensors, model has %zu",
                                 state->m.size(), state->v.size(), params.size()));
    w.u32(state->phase);
    w.u32(state->epoch_in_phase);
    w.u32(state->epochs_total);
    w.f64(state->best_val_nll);
    w.u32(state->epochs_since_best);
    w.u64(state->step);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (state->m[i].size() != params[i].second.numel() ||
          state->v[i].size() != params[i].second.numel())
        throw Error(detail::strfmt("moment size mismatch on %s", params[i].first.c_str()));
      w.f32_array(state->m[i].data(), state->m[i].size());
      w.f32_array(state->v[i].data(), state->v[i].size());
    }
  }
  out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
  if (!out) throw DataError("checkpoint write failed");
}

void save_checkpoint(const std::string& path, const FlowModel<float>& model,
                     const TrainState* state) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError(detail::strfmt("cannot create checkpoint %s", path.c_str()));
  save_checkpoint(f, model, state);
}

LoadedCheckpoint load_checkpoint(std::istream& in) {
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()};

  if (r.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    throw DataError("not a checkpoint: bad magic (expected SEFLOW01)");

  FlowConfig c;
  c.n_blocks = static_cast<int>(r.u32());
  c.group_size = static_cast<int>(r.u32());
  c.early_every = static_cast<int>(r.u32());
  c.early_channels = static_cast<int>(r.u32());
  c.wn_layers = static_cast<int>(r.u32());
  c.residual_channels = static_cast<int>(r.u32());
  c.skip_channels = static_cast<int>(r.u32());
  c.kernel_size = static_cast<int>(r.u32());
  c.sigma_train = r.f64();
  c.sigma_infer = r.f64();
  const bool companded = r.u8() != 0;
  const double mu = r.f64();
  if (companded && !(mu > 0))
    throw DataError(detail::strfmt("checkpoint: companding enabled with invalid mu %g", mu));

  LoadedCheckpoint out{FlowModel<float>(c), std::nullopt};  // validates the config
  out.model.companded = companded;
  out.model.mu = mu;

  auto params = out.model.named_parameters();
  const std::uint32_t count = r.u32();
  if (count != params.size())
    throw DataError(detail::strfmt("checkpoint holds %u tensors, this config needs %zu", count,
                                   params.size()));
  for (auto& [name, t] : params) {
    const std::string fname = r.str(r.u16());
    if (fname != name)
      throw DataError(detail::strfmt("checkpoint tensor '%s' where '%s' was expected",
                                     fname.c_str(), name.c_str()));
    const Shape sh{static_cast<int>(r.u32()), static_cast<int>(r.u32()),
                   static_cast<int>(r.u32())};
    if (!(sh == t.shape()))
      throw DataError(detail::strfmt("checkpoint tensor '%s' has shape %s, expected %s",
                                     name.c_str(), sh.str().c_str(), t.shape().str().c_str()));
    std::vector<float>& dst = t.mutable_values();
    for (float& v : dst) v = r.f32();
  }

  if (r.u8() != 0) {
    TrainState st;
    st.phase = r.u32();
    st.epoch_in_phase = r.u32();
    st.epochs_total = r.u32();
    st.best_val_nll = r.f64();
    st.epochs_since_best = r.u32();
    st.step = r.u64();
    st.m.resize(params.size());
    st.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::size_t n = params[i].second.numel();
      st.m[i].resize(n);
      st.v[i].resize(n);
      for (float& x : st.m[i]) x = r.f32();
      for (float& x : st.v[i]) x = r.f32();
    }
    out.state = std::move(st);
  }
  if (r.off != r.size)
    throw DataError(detail::strfmt("checkpoint has %zu trailing bytes", r.size - r.off));
  return out;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError(detail::strfmt("cannot open checkpoint %s", path.c_str()));
  return load_checkpoint(f);
}

}  // namespace seflow
