#include "har/infer.hpp"

#include <algorithm>
#include <cmath>

#include "har/error.hpp"
#include "kernels.hpp"

namespace har::infer {

using models::Model;
using models::ModelConfig;
using models::ModelKind;

namespace {

template <typename T>
T sig(T v) {
  // same branch structure as the graph op, so values agree bitwise at f64
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

// out[j] += sum_i x[i] * w[i * n + j]; same kernel as the graph's matmul,
// so accumulation order agrees term for term
template <typename T>
void gemv_acc(const T* x, const T* w, std::size_t m, std::size_t n, T* out) {
  kern::gemm_acc(x, w, out, 1, m, n);
}

}  // namespace

template <typename T>
Engine<T>::Engine(const Model& model) : config_(model.config()) {
  const auto& params = model.parameters();
  std::size_t cursor = 0;
  auto take = [&]() -> Buf {
    if (cursor >= params.size()) {
      throw_contract("engine: model exposes fewer parameters than its "
                     "config implies");
    }
    auto vals = params[cursor++].second.values();
    Buf buf(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
      buf[i] = static_cast<T>(vals[i]);
    }
    return buf;
  };
  auto take_cell = [&](std::size_t gates, std::size_t in, std::size_t hid) {
    Cell cell;
    cell.input = in;
    cell.hidden = hid;
    for (std::size_t g = 0; g < gates; ++g) {
      cell.w.push_back(take());
      cell.u.push_back(take());
      cell.b.push_back(take());
    }
    return cell;
  };

  std::size_t seq_elems = 0, row_elems = 0, xstep_elems = 0;
  if (config_.kind == ModelKind::bilstm) {
    const std::size_t hid = config_.lstm_hidden;
    std::size_t in = config_.input_channels;
    for (std::size_t l = 0; l < config_.lstm_layers; ++l) {
      Cell fwd = take_cell(4, in, hid);
      Cell bwd = take_cell(4, in, hid);
      lstm_.emplace_back(std::move(fwd), std::move(bwd));
      in = 2 * hid;
    }
    feature_width_ = 2 * hid;
    seq_elems = config_.input_time *
                std::max(config_.input_channels, feature_width_);
    h_.resize(hid);
    c_.resize(hid);
    gates_.resize(4 * hid);
    mm1_.resize(std::max(hid, config_.n_classes));
    mm2_.resize(hid);
  } else {
    std::size_t channels = config_.input_channels;
    std::size_t t_len = config_.input_time;
    for (const auto& bc : config_.conv_blocks) {
      Conv conv;
      conv.w = take();
      conv.b = take();
      conv.cin = channels;
      conv.cout = bc.out_channels;
      conv.kernel = bc.kernel;
      conv.stride = bc.stride;
      conv.pool = bc.pool;
      conv_.push_back(std::move(conv));
      const std::size_t t_conv = (t_len + bc.stride - 1) / bc.stride;
      row_elems = std::max(row_elems, t_conv);
      t_len = t_conv / bc.pool;
      channels = bc.out_channels;
      seq_elems = std::max(seq_elems, channels * t_len);
    }
    const std::size_t hid = config_.gru_hidden;
    std::size_t in = channels;
    for (std::size_t l = 0; l < config_.gru_layers; ++l) {
      gru_.push_back(take_cell(3, in, hid));
      in = hid;
    }
    feature_width_ = hid;
    seq_elems = std::max(seq_elems, t_len * hid);
    xstep_elems = std::max(channels, hid);
    h_.resize(hid);
    gates_.resize(3 * hid);
    mm1_.resize(std::max(hid, config_.n_classes));
    mm2_.resize(hid);
  }
  head_w_ = take();
  head_b_ = take();
  if (cursor != params.size()) {
    throw_contract("engine: model exposes more parameters than its config "
                   "implies");
  }

  seq_a_.resize(seq_elems);
  seq_b_.resize(seq_elems);
  row_.resize(row_elems);
  xstep_.resize(xstep_elems);
  feat_.resize(feature_width_);
  workspace_elems_ = seq_a_.size() + seq_b_.size() + h_.size() + c_.size() +
                     gates_.size() + mm1_.size() + mm2_.size() +
                     xstep_.size() + row_.size() + feat_.size();
}

template <typename T>
std::size_t Engine<T>::input_size() const {
  return config_.input_channels * config_.input_time;
}

template <typename T>
std::size_t Engine<T>::param_bytes() const {
  std::size_t elems = head_w_.size() + head_b_.size();
  auto cell_elems = [](const Cell& c) {
    std::size_t n = 0;
    for (const auto& b : c.w) n += b.size();
    for (const auto& b : c.u) n += b.size();
    for (const auto& b : c.b) n += b.size();
    return n;
  };
  for (const auto& [fwd, bwd] : lstm_) {
    elems += cell_elems(fwd) + cell_elems(bwd);
  }
  for (const auto& c : conv_) elems += c.w.size() + c.b.size();
  for (const auto& c : gru_) elems += cell_elems(c);
  return elems * sizeof(T);
}

template <typename T>
std::size_t Engine<T>::workspace_bytes() const {
  return workspace_elems_ * sizeof(T);
}

template <typename T>
void Engine<T>::gate_preact(const T* x, const T* h, const Cell& cell,
                            std::size_t g, T* out) {
  const std::size_t hid = cell.hidden;
  std::fill(mm1_.begin(), mm1_.begin() + hid, T(0));
  std::fill(mm2_.begin(), mm2_.end(), T(0));
  gemv_acc(x, cell.w[g].data(), cell.input, hid, mm1_.data());
  gemv_acc(h, cell.u[g].data(), hid, hid, mm2_.data());
  const T* b = cell.b[g].data();
  for (std::size_t j = 0; j < hid; ++j) out[j] = (mm1_[j] + mm2_[j]) + b[j];
}

template <typename T>
void Engine<T>::run_lstm_dir(const T* seq_in, std::size_t in,
                             std::size_t t_len, const Cell& cell,
                             bool reverse, T* seq_out, std::size_t out_off,
                             std::size_t out_width) {
  const std::size_t hid = cell.hidden;
  std::fill(h_.begin(), h_.end(), T(0));
  std::fill(c_.begin(), c_.end(), T(0));
  T* gi = gates_.data();
  T* gf = gi + hid;
  T* gg = gf + hid;
  T* go = gg + hid;
  for (std::size_t s = 0; s < t_len; ++s) {
    const std::size_t t = reverse ? t_len - 1 - s : s;
    const T* x = seq_in + t * in;
    gate_preact(x, h_.data(), cell, 0, gi);
    gate_preact(x, h_.data(), cell, 1, gf);
    gate_preact(x, h_.data(), cell, 2, gg);
    gate_preact(x, h_.data(), cell, 3, go);
    for (std::size_t j = 0; j < hid; ++j) {
      const T i = sig(gi[j]);
      const T f = sig(gf[j]);
      const T g = std::tanh(gg[j]);
      const T o = sig(go[j]);
      const T keep = f * c_[j];
      const T write = i * g;
      c_[j] = keep + write;
      h_[j] = o * std::tanh(c_[j]);
    }
    std::copy(h_.begin(), h_.end(), seq_out + t * out_width + out_off);
  }
}

template <typename T>
void Engine<T>::head_softmax(const T* feat, std::span<T> probs) {
  const std::size_t k = config_.n_classes;
  std::fill(mm1_.begin(), mm1_.begin() + k, T(0));
  gemv_acc(feat, head_w_.data(), feature_width_, k, mm1_.data());
  T mx = mm1_[0] + head_b_[0];
  probs[0] = mx;
  for (std::size_t i = 1; i < k; ++i) {
    probs[i] = mm1_[i] + head_b_[i];
    mx = std::max(mx, probs[i]);
  }
  T s = T(0);
  for (std::size_t i = 0; i < k; ++i) {
    probs[i] = std::exp(probs[i] - mx);
    s += probs[i];
  }
  for (std::size_t i = 0; i < k; ++i) probs[i] /= s;
}

template <typename T>
void Engine<T>::forward(std::span<const T> sample, std::span<T> probs) {
  if (sample.size() != input_size()) {
    throw_contract("engine: sample has " + std::to_string(sample.size()) +
                   " values, expected " + std::to_string(input_size()));
  }
  if (probs.size() != config_.n_classes) {
    throw_contract("engine: probability span has " +
                   std::to_string(probs.size()) + " slots, expected " +
                   std::to_string(config_.n_classes));
  }

  if (config_.kind == ModelKind::bilstm) {
    const std::size_t t_len = config_.input_time;
    const std::size_t chans = config_.input_channels;
    const std::size_t hid = config_.lstm_hidden;
    // transpose [C x T] into time-major rows
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t ci = 0; ci < chans; ++ci) {
        seq_a_[t * chans + ci] = sample[ci * t_len + t];
      }
    }
    T* in = seq_a_.data();
    T* out = seq_b_.data();
    std::size_t in_width = chans;
    for (const auto& [fwd, bwd] : lstm_) {
      run_lstm_dir(in, in_width, t_len, fwd, false, out, 0, 2 * hid);
      run_lstm_dir(in, in_width, t_len, bwd, true, out, hid, 2 * hid);
      std::swap(in, out);
      in_width = 2 * hid;
    }
    // readout: final forward state and final backward state
    std::copy(in + (t_len - 1) * 2 * hid, in + (t_len - 1) * 2 * hid + hid,
              feat_.begin());
    std::copy(in + hid, in + 2 * hid, feat_.begin() + hid);
  } else {
    const T* x = sample.data();
    std::size_t cin = config_.input_channels;
    std::size_t t_len = config_.input_time;
    T* maps = seq_a_.data();
    T* other = seq_b_.data();
    for (const Conv& conv : conv_) {
      const std::size_t t_conv = (t_len + conv.stride - 1) / conv.stride;
      const std::size_t span = (t_conv - 1) * conv.stride + conv.kernel;
      const std::size_t pad_left = (span > t_len ? span - t_len : 0) / 2;
      const std::size_t t_out = t_conv / conv.pool;
      for (std::size_t co = 0; co < conv.cout; ++co) {
        for (std::size_t to = 0; to < t_conv; ++to) {
          const std::ptrdiff_t off =
              static_cast<std::ptrdiff_t>(to * conv.stride) -
              static_cast<std::ptrdiff_t>(pad_left);
          T acc = T(0);
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const T* xrow = x + ci * t_len;
            const T* wrow =
                conv.w.data() + (co * cin + ci) * conv.kernel;
            for (std::size_t j = 0; j < conv.kernel; ++j) {
              const std::ptrdiff_t idx =
                  off + static_cast<std::ptrdiff_t>(j);
              if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(t_len)) {
                acc += xrow[idx] * wrow[j];
              }
            }
          }
          const T biased = acc + conv.b[co];
          row_[to] = biased > T(0) ? biased : T(0);
        }
        T* orow = maps + co * t_out;
        for (std::size_t to = 0; to < t_out; ++to) {
          T best = row_[to * conv.pool];
          for (std::size_t j = 1; j < conv.pool; ++j) {
            const T v = row_[to * conv.pool + j];
            if (v > best) best = v;
          }
          orow[to] = best;
        }
      }
      x = maps;
      std::swap(maps, other);
      cin = conv.cout;
      t_len = t_out;
    }
    // x is channel-major [cin x t_len]; the first recurrent layer gathers
    // one time step at a time
    const T* in_seq = x;
    bool gather = true;
    T* out_seq = maps;
    for (const Cell& cell : gru_) {
      const std::size_t hid = cell.hidden;
      std::fill(h_.begin(), h_.end(), T(0));
      T* gz = gates_.data();
      T* gr = gz + hid;
      T* grh = gr + hid;
      for (std::size_t t = 0; t < t_len; ++t) {
        const T* xt;
        if (gather) {
          for (std::size_t ci = 0; ci < cell.input; ++ci) {
            xstep_[ci] = in_seq[ci * t_len + t];
          }
          xt = xstep_.data();
        } else {
          xt = in_seq + t * cell.input;
        }
        gate_preact(xt, h_.data(), cell, 0, gz);
        gate_preact(xt, h_.data(), cell, 1, gr);
        for (std::size_t j = 0; j < hid; ++j) grh[j] = sig(gr[j]) * h_[j];
        gate_preact(xt, grh, cell, 2, gr);  // candidate, reuses the r slot
        for (std::size_t j = 0; j < hid; ++j) {
          const T z = sig(gz[j]);
          const T hc = std::tanh(gr[j]);
          const T carry = (T(1) - z) * h_[j];
          const T blend = z * hc;
          h_[j] = carry + blend;
        }
        std::copy(h_.begin(), h_.end(), out_seq + t * hid);
      }
      in_seq = out_seq;
      out_seq = out_seq == seq_a_.data() ? seq_b_.data() : seq_a_.data();
      gather = false;
    }
    std::copy(h_.begin(), h_.end(), feat_.begin());
  }
  head_softmax(feat_.data(), probs);
}

template <typename T>
std::vector<T> Engine<T>::forward(std::span<const T> sample) {
  std::vector<T> probs(config_.n_classes);
  forward(sample, std::span<T>(probs));
  return probs;
}

template class Engine<float>;
template class Engine<double>;

}  // namespace har::infer
