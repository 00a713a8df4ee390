#pragma once

#include <array>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "coldcast/dataio.hpp"
#include "coldcast/ndiff.hpp"

namespace coldcast {

// ---------------------------------------------------------------------------
// Architecture family: a shared recurrent backbone (FC -> FC -> GRU -> FC)
// with five heads/conditioning variants. All variants emit three LTE
// channels; evaluation uses LTE50 only.

enum class Variant { stl, multi_head, add_embed, concat_embed, mult_embed };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::stl: return "stl";
    case Variant::multi_head: return "multih";
    case Variant::add_embed: return "adde";
    case Variant::concat_embed: return "concate";
    case Variant::mult_embed: return "multe";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::stl, Variant::multi_head, Variant::add_embed, Variant::concat_embed,
                    Variant::mult_embed}) {
    if (s == variant_name(v)) return v;
  }
  throw UsageError("unknown model variant '" + s + "' (stl|multih|adde|concate|multe)");
}

inline bool uses_embedding(Variant v) {
  return v == Variant::add_embed || v == Variant::concat_embed || v == Variant::mult_embed;
}

struct ModelSpec {
  Variant variant = Variant::stl;
  int input_dim = 12;
  std::array<int, 3> fc_dims = {1024, 2048, 1024};
  int gru_hidden = 2048;
  int n_tasks = 1;
  int embed_dim = 12;

  static constexpr int output_dim = 3;

  ModelSpec& desk_scale() {
    fc_dims = {64, 128, 64};
    gru_hidden = 128;
    return *this;
  }

  /// Width of the first FC input: embeddings combine with the raw features
  /// before the backbone, so concat widens it.
  int combined_dim() const {
    return variant == Variant::concat_embed ? input_dim + embed_dim : input_dim;
  }

  int n_heads() const { return variant == Variant::multi_head ? n_tasks : 1; }

  void validate() const {
    if (input_dim < 1 || fc_dims[0] < 1 || fc_dims[1] < 1 || fc_dims[2] < 1 || gru_hidden < 1) {
      throw UsageError("model dimensions must be positive");
    }
    if (n_tasks < 1) throw UsageError("n_tasks must be >= 1");
    if ((variant == Variant::add_embed || variant == Variant::mult_embed) &&
        embed_dim != input_dim) {
      throw UsageError("elementwise embedding variants require embed_dim == input_dim");
    }
    if (uses_embedding(variant) && embed_dim < 1) throw UsageError("embed_dim must be >= 1");
  }

  ParamLayout make_layout() const {
    validate();
    ParamLayout layout;
    layout.add("fc1.w", fc_dims[0], combined_dim());
    layout.add("fc1.b", fc_dims[0], 1);
    layout.add("fc2.w", fc_dims[1], fc_dims[0]);
    layout.add("fc2.b", fc_dims[1], 1);
    for (const char* n : {"wz", "wr", "wn"}) layout.add(std::string("gru.") + n, gru_hidden, fc_dims[1]);
    for (const char* n : {"uz", "ur", "un"}) layout.add(std::string("gru.") + n, gru_hidden, gru_hidden);
    for (const char* n : {"bz", "br", "bn", "bhn"}) layout.add(std::string("gru.") + n, gru_hidden, 1);
    layout.add("fc3.w", fc_dims[2], gru_hidden);
    layout.add("fc3.b", fc_dims[2], 1);
    if (uses_embedding(variant)) layout.add("embed", n_tasks, embed_dim);
    for (int h = 0; h < n_heads(); ++h) {
      layout.add("head" + std::to_string(h) + ".w", output_dim, fc_dims[2]);
      layout.add("head" + std::to_string(h) + ".b", output_dim, 1);
    }
    return layout;
  }
};

inline std::string head_name(int task) { return "head" + std::to_string(task); }

// ---------------------------------------------------------------------------
// Forward/backward caches, preallocated per sequence length.

template <typename S>
struct ModelCache {
  Matrix<S> u;   // T x combined_dim
  Matrix<S> a1;  // T x fc_dims[0]
  Matrix<S> a2;  // T x fc_dims[1]
  Matrix<S> h;   // T x gru_hidden
  Matrix<S> f3;  // T x fc_dims[2]
  std::vector<GruStepCache<S>> gru;
};

template <typename S>
class ColdModel {
 public:
  ModelSpec spec;
  ParamStore<S> params;

  ColdModel() = default;
  explicit ColdModel(const ModelSpec& sp)
      : spec(sp), params(std::make_shared<ParamLayout>(sp.make_layout())) {}

  static ColdModel seeded(const ModelSpec& sp, std::uint64_t seed) {
    ColdModel m(sp);
    m.params.init_uniform(seed);
    return m;
  }

  ParamStore<S> zero_grads() const { return ParamStore<S>(params.layout_ptr()); }

  /// Task embedding row used for `task`, unless an override is supplied
  /// (embedding-finetune path).
  Vector<S> task_embedding(int task, const Vector<S>* override_e) const {
    if (override_e) return *override_e;
    check_task(task);
    return params.view("embed").row(task).transpose();
  }

  Matrix<S> forward(const Matrix<S>& x, int task = 0,
                    const Vector<S>* embed_override = nullptr) const {
    ModelCache<S> cache;
    return forward_cached(x, task, cache, embed_override);
  }

  Matrix<S> forward_cached(const Matrix<S>& x, int task, ModelCache<S>& c,
                           const Vector<S>* embed_override = nullptr) const {
    if (x.cols() != spec.input_dim) {
      throw ShapeError("model input " + shape_str(x.rows(), x.cols()) + ", expected cols " +
                       std::to_string(spec.input_dim));
    }
    if (spec.variant == Variant::multi_head) check_task(task);
    const Eigen::Index T = x.rows();
    const int d0 = spec.fc_dims[0], d1 = spec.fc_dims[1], d2 = spec.fc_dims[2];
    const int gh = spec.gru_hidden;

    c.u.resize(T, spec.combined_dim());
    c.a1.resize(T, d0);
    c.a2.resize(T, d1);
    c.h.resize(T, gh);
    c.f3.resize(T, d2);
    c.gru.resize(T);

    auto w1 = params.view("fc1.w"), b1 = params.view("fc1.b");
    auto w2 = params.view("fc2.w"), b2 = params.view("fc2.b");
    auto w3 = params.view("fc3.w"), b3 = params.view("fc3.b");
    auto gru = GruWeights<S>::from(params, "gru");
    int head = spec.variant == Variant::multi_head ? task : 0;
    auto hw = params.view(head_name(head) + ".w");
    auto hb = params.view(head_name(head) + ".b");

    Vector<S> e;
    if (uses_embedding(spec.variant)) e = task_embedding(task, embed_override);

    Matrix<S> y(T, ModelSpec::output_dim);
    Vector<S> h_prev = Vector<S>::Zero(gh);  // seasons start from a zero state
    for (Eigen::Index t = 0; t < T; ++t) {
      Vector<S> xt = x.row(t).transpose();
      Vector<S> u;
      switch (spec.variant) {
        case Variant::stl:
        case Variant::multi_head: u = xt; break;
        case Variant::add_embed: u = xt + e; break;
        case Variant::mult_embed: u = xt.cwiseProduct(e); break;
        case Variant::concat_embed:
          u.resize(spec.input_dim + spec.embed_dim);
          u << xt, e;
          break;
      }
      c.u.row(t) = u.transpose();
      Vector<S> a1 = (w1 * u + b1.col(0)).cwiseMax(S(0));
      Vector<S> a2 = (w2 * a1 + b2.col(0)).cwiseMax(S(0));
      Vector<S> h = gru_step<S>(a2, h_prev, gru, &c.gru[t]);
      Vector<S> f3 = (w3 * h + b3.col(0)).cwiseMax(S(0));
      y.row(t) = (hw * f3 + hb.col(0)).transpose();
      c.a1.row(t) = a1.transpose();
      c.a2.row(t) = a2.transpose();
      c.h.row(t) = h.transpose();
      c.f3.row(t) = f3.transpose();
      h_prev = std::move(h);
    }
    return y;
  }

  /// Backbone features only (pre-head), for inspection and tests.
  Matrix<S> backbone_forward(const Matrix<S>& x, int task = 0) const {
    ModelCache<S> c;
    forward_cached(x, task, c);
    return c.f3;
  }

  /// Accumulates gradients of the cached forward pass into `grads`. When
  /// `d_embed` is non-null the embedding gradient lands there instead of the
  /// table row (embedding-finetune path).
  void backward(const Matrix<S>& x, const ModelCache<S>& c, int task, const Matrix<S>& d_y,
                ParamStore<S>& grads, Vector<S>* d_embed = nullptr) const {
    const Eigen::Index T = c.u.rows();
    const int gh = spec.gru_hidden;

    auto w1 = params.view("fc1.w");
    auto w2 = params.view("fc2.w");
    auto w3 = params.view("fc3.w");
    auto gru_w = GruWeights<S>::from(params, "gru");
    int head = spec.variant == Variant::multi_head ? task : 0;
    auto hw = params.view(head_name(head) + ".w");

    auto g1w = grads.view("fc1.w");
    auto g1b = grads.view("fc1.b");
    auto g2w = grads.view("fc2.w");
    auto g2b = grads.view("fc2.b");
    auto g3w = grads.view("fc3.w");
    auto g3b = grads.view("fc3.b");
    auto ghw = grads.view(head_name(head) + ".w");
    auto ghb = grads.view(head_name(head) + ".b");
    auto gru_g = GruGrads<S>::from(grads, "gru");

    Vector<S> e_grad = Vector<S>::Zero(uses_embedding(spec.variant) ? spec.embed_dim : 0);
    Vector<S> dh_next = Vector<S>::Zero(gh);
    Vector<S> dx, dh_prev;
    for (Eigen::Index t = T - 1; t >= 0; --t) {
      Vector<S> dy = d_y.row(t).transpose();
      Vector<S> f3 = c.f3.row(t).transpose();
      Vector<S> h = c.h.row(t).transpose();
      Vector<S> a2 = c.a2.row(t).transpose();
      Vector<S> a1 = c.a1.row(t).transpose();
      Vector<S> u = c.u.row(t).transpose();

      ghw.noalias() += dy * f3.transpose();
      ghb.col(0) += dy;
      Vector<S> df3 = hw.transpose() * dy;
      Vector<S> df3_pre =
          df3.cwiseProduct(f3.unaryExpr([](S v) { return v > S(0) ? S(1) : S(0); }));
      g3w.noalias() += df3_pre * h.transpose();
      g3b.col(0) += df3_pre;

      Vector<S> dh = w3.transpose() * df3_pre + dh_next;
      Vector<S> h_prev = t > 0 ? Vector<S>(c.h.row(t - 1).transpose()) : Vector<S>::Zero(gh);
      gru_step_backward<S>(a2, h_prev, gru_w, c.gru[t], dh, gru_g, dx, dh_prev);

      Vector<S> da2_pre =
          dx.cwiseProduct(a2.unaryExpr([](S v) { return v > S(0) ? S(1) : S(0); }));
      g2w.noalias() += da2_pre * a1.transpose();
      g2b.col(0) += da2_pre;
      Vector<S> da1 = w2.transpose() * da2_pre;
      Vector<S> da1_pre =
          da1.cwiseProduct(a1.unaryExpr([](S v) { return v > S(0) ? S(1) : S(0); }));
      g1w.noalias() += da1_pre * u.transpose();
      g1b.col(0) += da1_pre;

      if (uses_embedding(spec.variant)) {
        Vector<S> du = w1.transpose() * da1_pre;
        switch (spec.variant) {
          case Variant::add_embed: e_grad += du; break;
          case Variant::mult_embed: e_grad += du.cwiseProduct(Vector<S>(x.row(t).transpose())); break;
          case Variant::concat_embed: e_grad += du.tail(spec.embed_dim); break;
          default: break;
        }
      }
      dh_next = std::move(dh_prev);
    }

    if (uses_embedding(spec.variant)) {
      if (d_embed) {
        *d_embed = e_grad;
      } else {
        check_task(task);
        grads.view("embed").row(task) += e_grad.transpose();
      }
    }
  }

 private:
  void check_task(int task) const {
    if (task < 0 || task >= spec.n_tasks) {
      throw UsageError("task id " + std::to_string(task) + " out of range [0, " +
                       std::to_string(spec.n_tasks) + ")");
    }
  }
};

// ---------------------------------------------------------------------------
// Checkpoints are self-describing: spec, feature normalization, then blocks.
// Values round-trip exactly in double precision.

template <typename S>
struct Checkpoint {
  ModelSpec spec;
  FeatureStats stats;
  ParamStore<S> params;
};

template <typename S>
std::string save_checkpoint(const ColdModel<S>& model, const FeatureStats& stats) {
  std::ostringstream out;
  out << "coldcast-checkpoint v1\n";
  out << "variant = " << variant_name(model.spec.variant) << '\n';
  out << "input_dim = " << model.spec.input_dim << '\n';
  out << "fc_dims = " << model.spec.fc_dims[0] << ' ' << model.spec.fc_dims[1] << ' '
      << model.spec.fc_dims[2] << '\n';
  out << "gru_hidden = " << model.spec.gru_hidden << '\n';
  out << "n_tasks = " << model.spec.n_tasks << '\n';
  out << "embed_dim = " << model.spec.embed_dim << '\n';
  out << "features =";
  for (const auto& n : stats.names) out << ' ' << n;
  out << '\n';
  out << "feature_mean =";
  for (double v : stats.mean) out << ' ' << format_double(v);
  out << '\n';
  out << "feature_sd =";
  for (double v : stats.sd) out << ' ' << format_double(v);
  out << '\n';
  write_blocks(out, model.params);
  return out.str();
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::string& text,
                              std::optional<Variant> expect_variant = std::nullopt) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "coldcast-checkpoint v1") {
    throw DataError("not a coldcast checkpoint (bad magic line)");
  }
  Checkpoint<S> ck;
  auto pos = in.tellg();
  while (std::getline(in, line)) {
    if (line.rfind("block ", 0) == 0) {
      in.seekg(pos);
      break;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint: bad header line '" + line + "'");
    std::string key = csv::trim(line.substr(0, eq));
    std::istringstream val(line.substr(eq + 1));
    if (key == "variant") {
      std::string v;
      val >> v;
      ck.spec.variant = parse_variant(v);
    } else if (key == "input_dim") {
      val >> ck.spec.input_dim;
    } else if (key == "fc_dims") {
      val >> ck.spec.fc_dims[0] >> ck.spec.fc_dims[1] >> ck.spec.fc_dims[2];
    } else if (key == "gru_hidden") {
      val >> ck.spec.gru_hidden;
    } else if (key == "n_tasks") {
      val >> ck.spec.n_tasks;
    } else if (key == "embed_dim") {
      val >> ck.spec.embed_dim;
    } else if (key == "features") {
      std::string n;
      while (val >> n) ck.stats.names.push_back(n);
    } else if (key == "feature_mean") {
      double v;
      while (val >> v) ck.stats.mean.push_back(v);
    } else if (key == "feature_sd") {
      double v;
      while (val >> v) ck.stats.sd.push_back(v);
    } else {
      throw DataError("checkpoint: unknown header key '" + key + "'");
    }
    pos = in.tellg();
  }
  if (expect_variant && ck.spec.variant != *expect_variant) {
    throw DataError(std::string("checkpoint variant mismatch: expected ") +
                    variant_name(*expect_variant) + ", found " + variant_name(ck.spec.variant));
  }
  ck.params = ParamStore<S>(std::make_shared<ParamLayout>(ck.spec.make_layout()));
  read_blocks(in, ck.params);
  return ck;
}

// ---------------------------------------------------------------------------
// Transfer adapters. Both leave the trained model bitwise untouched outside
// the newly introduced parameters.

/// Multi-head transfer: clone with one extra, freshly seeded head. Only the
/// coordinates in [trainable_lo, trainable_hi) may be updated.
template <typename S>
struct HeadAdapter {
  ColdModel<S> model;
  int new_task = 0;
  std::size_t trainable_lo = 0;
  std::size_t trainable_hi = 0;
};

template <typename S>
HeadAdapter<S> add_task_head(const ColdModel<S>& base, std::uint64_t seed) {
  if (base.spec.variant != Variant::multi_head) {
    throw UsageError("head finetuning requires a multih model");
  }
  ModelSpec spec = base.spec;
  spec.n_tasks += 1;
  HeadAdapter<S> out;
  out.model = ColdModel<S>(spec);
  out.new_task = base.spec.n_tasks;

  // Copy shared blocks and old heads; init the new head from its own stream.
  for (const auto& b : base.params.layout().blocks()) {
    out.model.params.view(b.name) = base.params.view(b.name);
  }
  ParamStore<S> fresh(out.model.params.layout_ptr());
  fresh.init_uniform(seed);
  std::string wname = head_name(out.new_task) + ".w";
  std::string bname = head_name(out.new_task) + ".b";
  out.model.params.view(wname) = fresh.view(wname);
  out.model.params.view(bname) = fresh.view(bname);

  const auto& wblock = out.model.params.layout().block(wname);
  const auto& bblock = out.model.params.layout().block(bname);
  out.trainable_lo = std::min(wblock.offset, bblock.offset);
  out.trainable_hi = std::max(wblock.offset + wblock.size(), bblock.offset + bblock.size());
  return out;
}

/// Embedding transfer: the new task's embedding is a learned linear
/// combination of the existing rows; only the C coefficients train.
template <typename S>
struct EmbedAdapter {
  const ColdModel<S>* base = nullptr;
  Vector<S> alpha;

  static EmbedAdapter make(const ColdModel<S>& base_model) {
    if (!uses_embedding(base_model.spec.variant)) {
      throw UsageError("embedding finetuning requires an adde/concate/multe model");
    }
    EmbedAdapter a;
    a.base = &base_model;
    // Start at the mean of the existing embeddings.
    a.alpha = Vector<S>::Constant(base_model.spec.n_tasks, S(1) / S(base_model.spec.n_tasks));
    return a;
  }

  Vector<S> embedding() const {
    return base->params.view("embed").transpose() * alpha;
  }

  Matrix<S> forward(const Matrix<S>& x) const {
    Vector<S> e = embedding();
    return base->forward(x, 0, &e);
  }

  /// Gradient of the loss wrt alpha for one sequence: chain through the
  /// shared embedding vector.
  Vector<S> alpha_grad(const Matrix<S>& x, const Matrix<S>& d_y) const {
    Vector<S> e = embedding();
    ModelCache<S> cache;
    base->forward_cached(x, 0, cache, &e);
    ParamStore<S> scratch = base->zero_grads();
    Vector<S> d_embed;
    base->backward(x, cache, 0, d_y, scratch, &d_embed);
    return base->params.view("embed") * d_embed;
  }
};

}  // namespace coldcast
