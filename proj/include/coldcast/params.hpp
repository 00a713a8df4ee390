#pragma once

#include <cstring>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "coldcast/common.hpp"
#include "coldcast/linalg.hpp"

namespace coldcast {

// ---------------------------------------------------------------------------
// All trainable parameters of a model live in one flat buffer, addressed by
// named blocks. Optimizer state, gradients, and finite-difference probes then
// operate on plain arrays, and checkpoints are a dump of (name, shape, data).

struct BlockInfo {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;  // 1 for bias vectors
  std::size_t offset = 0;

  std::size_t size() const { return std::size_t(rows) * std::size_t(cols); }
};

class ParamLayout {
 public:
  void add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    BlockInfo b{name, rows, cols, total_};
    index_[name] = blocks_.size();
    blocks_.push_back(b);
    total_ += b.size();
  }

  const std::vector<BlockInfo>& blocks() const { return blocks_; }
  std::size_t total_size() const { return total_; }

  const BlockInfo& block(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw NumericError("unknown parameter block: " + name);
    return blocks_[it->second];
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

 private:
  std::vector<BlockInfo> blocks_;
  std::map<std::string, std::size_t> index_;
  std::size_t total_ = 0;
};

template <typename S>
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(std::shared_ptr<const ParamLayout> layout)
      : layout_(std::move(layout)), data_(layout_->total_size(), S(0)) {}

  const ParamLayout& layout() const { return *layout_; }
  std::shared_ptr<const ParamLayout> layout_ptr() const { return layout_; }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::size_t size() const { return data_.size(); }

  MatrixMap<S> view(const std::string& name) {
    const BlockInfo& b = layout_->block(name);
    return MatrixMap<S>(data_.data() + b.offset, b.rows, b.cols);
  }
  ConstMatrixMap<S> view(const std::string& name) const {
    const BlockInfo& b = layout_->block(name);
    return ConstMatrixMap<S>(data_.data() + b.offset, b.rows, b.cols);
  }

  void set_zero() { std::fill(data_.begin(), data_.end(), S(0)); }

  /// fan-in scaled uniform init; each block draws from its own stream so the
  /// values of shared blocks match across architectures with matched seeds.
  void init_uniform(std::uint64_t seed) {
    for (const auto& b : layout_->blocks()) {
      Rng rng(mix_seed(seed, "init", b.name));
      if (b.cols == 1) {
        // biases start at zero
        std::fill(data_.begin() + b.offset, data_.begin() + b.offset + b.size(), S(0));
      } else {
        double bound = 1.0 / std::sqrt(double(b.cols));
        for (std::size_t i = 0; i < b.size(); ++i) {
          data_[b.offset + i] = S(rng.next_uniform(-bound, bound));
        }
      }
    }
  }

  /// Name of the block containing flat coordinate k.
  const BlockInfo& block_of(std::size_t k) const {
    for (const auto& b : layout_->blocks()) {
      if (k >= b.offset && k < b.offset + b.size()) return b;
    }
    throw NumericError("coordinate out of range");
  }

 private:
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<S> data_;
};

// ---------------------------------------------------------------------------
// Checkpoint block IO: text lines that round-trip doubles exactly.

template <typename S>
void write_blocks(std::ostream& out, const ParamStore<S>& store) {
  for (const auto& b : store.layout().blocks()) {
    out << "block " << b.name << ' ' << b.rows << ' ' << b.cols << '\n';
    const S* p = store.data() + b.offset;
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (i) out << ' ';
      out << format_double(double(p[i]));
    }
    out << '\n';
  }
}

template <typename S>
void read_blocks(std::istream& in, ParamStore<S>& store) {
  std::string word;
  std::size_t seen = 0;
  while (in >> word) {
    if (word != "block") throw DataError("checkpoint: expected 'block', got '" + word + "'");
    std::string name;
    Eigen::Index rows, cols;
    if (!(in >> name >> rows >> cols)) throw DataError("checkpoint: truncated block header");
    if (!store.layout().has(name)) throw DataError("checkpoint: unexpected block " + name);
    const BlockInfo& b = store.layout().block(name);
    if (b.rows != rows || b.cols != cols) {
      throw DataError("checkpoint: block " + name + " shape mismatch: expected " +
                      shape_str(b.rows, b.cols) + ", got " + shape_str(rows, cols));
    }
    S* p = store.data() + b.offset;
    for (std::size_t i = 0; i < b.size(); ++i) {
      std::string tok;
      if (!(in >> tok)) throw DataError("checkpoint: truncated block " + name);
      p[i] = S(std::strtod(tok.c_str(), nullptr));
    }
    ++seen;
  }
  if (seen != store.layout().blocks().size()) {
    throw DataError("checkpoint: missing parameter blocks");
  }
}

}  // namespace coldcast
