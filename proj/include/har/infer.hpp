#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "har/models.hpp"

namespace har::infer {

// Graph-free single-sample forward pass. Parameters are copied into flat
// buffers of T at construction and all scratch is preallocated, so a
// forward call performs no allocation. The arithmetic mirrors the training
// graph operation by operation; at 64 bits the probabilities match
// Model::forward bit for bit.
template <typename T>
class Engine {
 public:
  explicit Engine(const models::Model& model);

  const models::ModelConfig& config() const { return config_; }
  std::size_t input_size() const;  // channels * time
  std::size_t n_classes() const { return config_.n_classes; }

  // sample is [channels x time] row-major; probs receives n_classes()
  // values. Spans of the wrong length are a contract error.
  void forward(std::span<const T> sample, std::span<T> probs);
  std::vector<T> forward(std::span<const T> sample);

  std::size_t param_bytes() const;
  std::size_t workspace_bytes() const;

 private:
  using Buf = std::vector<T>;

  struct Cell {  // one recurrent direction: W/U/b per gate, gate-major
    std::vector<Buf> w, u, b;
    std::size_t input = 0, hidden = 0;
  };
  struct Conv {
    Buf w, b;
    std::size_t cin = 0, cout = 0, kernel = 0, stride = 0, pool = 0;
  };

  void gate_preact(const T* x, const T* h, const Cell& cell, std::size_t g,
                   T* out);
  void run_lstm_dir(const T* seq_in, std::size_t in, std::size_t t_len,
                    const Cell& cell, bool reverse, T* seq_out,
                    std::size_t out_off, std::size_t out_width);
  void head_softmax(const T* feat, std::span<T> probs);

  models::ModelConfig config_;
  std::vector<std::pair<Cell, Cell>> lstm_;
  std::vector<Conv> conv_;
  std::vector<Cell> gru_;
  Buf head_w_, head_b_;
  std::size_t feature_width_ = 0;

  // scratch, sized once in the constructor
  Buf seq_a_, seq_b_;  // feature sequences (time-major for recurrent stages)
  Buf h_, c_, gates_, mm1_, mm2_, xstep_, row_, feat_;
  std::size_t workspace_elems_ = 0;
};

extern template class Engine<float>;
extern template class Engine<double>;

}  // namespace har::infer
