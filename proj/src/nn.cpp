#include "roomabs/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <limits>

#include "roomabs/dataset.hpp"
#include "roomabs/error.hpp"
#include "roomabs/parallel.hpp"
#include "roomabs/random.hpp"

namespace roomabs::nn {

using nlohmann::json;

std::string_view head_name(OutputHead h) {
  switch (h) {
    case OutputHead::kAlpha: return "alpha";
    case OutputHead::kInverseAlpha: return "inverse_alpha";
    case OutputHead::kAlphaAndScattering: return "alpha_and_scattering";
  }
  return "?";
}

OutputHead head_from_name(std::string_view name) {
  for (auto h : {OutputHead::kAlpha, OutputHead::kInverseAlpha, OutputHead::kAlphaAndScattering}) {
    if (head_name(h) == name) return h;
  }
  throw InvalidArgument("unknown output head '" + std::string(name) + "'");
}

std::size_t head_dim(OutputHead h) {
  return h == OutputHead::kAlphaAndScattering ? 2 * kNumBands : kNumBands;
}

std::vector<LayerSpec> ModelSpec::layers() const {
  auto out = hidden;
  out.push_back(LayerSpec::dense(head_dim(head)));
  out.push_back(head == OutputHead::kInverseAlpha ? LayerSpec::relu() : LayerSpec::sigmoid());
  return out;
}

ModelSpec ModelSpec::mlp(OutputHead head, std::size_t input_dim) {
  ModelSpec s;
  s.name = "mlp";
  s.head = head;
  s.input_dim = input_dim;
  for (std::size_t n : {128, 64, 32}) {
    s.hidden.push_back(LayerSpec::dense(n));
    s.hidden.push_back(LayerSpec::elu());
  }
  return s;
}

ModelSpec ModelSpec::cnn(OutputHead head, std::size_t input_dim) {
  ModelSpec s;
  s.name = "cnn";
  s.head = head;
  s.input_dim = input_dim;
  const std::pair<std::size_t, std::size_t> convs[] = {{64, 33}, {32, 17}, {16, 9}};
  for (auto [filters, width] : convs) {
    s.hidden.push_back(LayerSpec::conv1d(filters, width));
    s.hidden.push_back(LayerSpec::maxpool(4));
    s.hidden.push_back(LayerSpec::elu());
  }
  s.hidden.push_back(LayerSpec::flatten());
  s.hidden.push_back(LayerSpec::dense(32));
  s.hidden.push_back(LayerSpec::elu());
  return s;
}

std::vector<Shape> shape_trace(const ModelSpec& spec) {
  if (spec.input_dim == 0) throw ShapeMismatch("input dimension must be positive");
  std::vector<Shape> shapes{{1, spec.input_dim}};
  std::size_t index = 0;
  for (const auto& layer : spec.layers()) {
    const Shape in = shapes.back();
    const auto where = " (layer " + std::to_string(index) + ")";
    Shape out = in;
    switch (layer.kind) {
      case LayerKind::kDense:
        if (in.channels != 1) throw ShapeMismatch("dense layer needs a flat input" + where);
        if (layer.size == 0) throw ShapeMismatch("dense layer with no outputs" + where);
        out = {1, layer.size};
        break;
      case LayerKind::kConv1d:
        if (layer.width % 2 == 0) throw ShapeMismatch("conv width must be odd" + where);
        if (layer.size == 0) throw ShapeMismatch("conv layer with no filters" + where);
        out = {layer.size, in.length};
        break;
      case LayerKind::kMaxPool:
        if (layer.size == 0 || in.length % layer.size != 0) {
          throw ShapeMismatch("pool width " + std::to_string(layer.size) +
                              " does not divide length " + std::to_string(in.length) + where);
        }
        out = {in.channels, in.length / layer.size};
        break;
      case LayerKind::kFlatten:
        out = {1, in.size()};
        break;
      case LayerKind::kElu:
      case LayerKind::kSigmoid:
      case LayerKind::kRelu:
        break;
    }
    shapes.push_back(out);
    ++index;
  }
  return shapes;
}

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using MapM = Eigen::Map<MatR<T>>;
template <typename T>
using CMapM = Eigen::Map<const MatR<T>>;
template <typename T>
using MapV = Eigen::Map<Vec<T>>;
template <typename T>
using CMapV = Eigen::Map<const Vec<T>>;

struct LayerPlan {
  LayerSpec spec;
  Shape in;
  Shape out;
  int weight = -1;
  int bias = -1;
};

struct ParamInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t fan_in = 0;
  bool is_bias = false;
};

struct Plan {
  std::vector<LayerPlan> layers;
  std::vector<ParamInfo> params;
};

Plan make_plan(const ModelSpec& spec) {
  const auto layers = spec.layers();
  const auto shapes = shape_trace(spec);
  Plan plan;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    LayerPlan lp{layers[i], shapes[i], shapes[i + 1]};
    const auto prefix = "layer" + std::to_string(i);
    if (lp.spec.kind == LayerKind::kDense || lp.spec.kind == LayerKind::kConv1d) {
      ParamInfo w{prefix + ".weight", {}, 0, false};
      if (lp.spec.kind == LayerKind::kDense) {
        w.shape = {lp.out.length, lp.in.length};
        w.fan_in = lp.in.length;
      } else {
        w.shape = {lp.spec.size, lp.in.channels, lp.spec.width};
        w.fan_in = lp.in.channels * lp.spec.width;
      }
      lp.weight = static_cast<int>(plan.params.size());
      plan.params.push_back(w);
      lp.bias = static_cast<int>(plan.params.size());
      plan.params.push_back({prefix + ".bias", {lp.spec.kind == LayerKind::kDense ? lp.out.length
                                                                                  : lp.spec.size},
                             0, true});
    }
    plan.layers.push_back(lp);
  }
  return plan;
}

// Per-sample scratch space for one worker.
template <typename T>
struct Workspace {
  std::vector<std::vector<T>> acts;  // acts[i] feeds layer i
  std::vector<std::vector<T>> cols;
  std::vector<std::vector<std::uint32_t>> argmax;
  std::vector<T> grad;
  std::vector<T> grad_next;
  std::vector<T> dcol;

  explicit Workspace(const Plan& plan)
      : acts(plan.layers.size() + 1), cols(plan.layers.size()), argmax(plan.layers.size()) {}
};

template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t length, std::size_t width,
            std::vector<T>& col) {
  col.assign(channels * width * length, T(0));
  const auto pad = static_cast<std::ptrdiff_t>(width / 2);
  const auto len = static_cast<std::ptrdiff_t>(length);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t k = 0; k < width; ++k) {
      T* row = col.data() + (c * width + k) * length;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
      const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(len, len - shift);
      if (t1 > t0) std::copy(x + c * length + t0 + shift, x + c * length + t1 + shift, row + t0);
    }
  }
}

template <typename T>
void col2im(const std::vector<T>& col, std::size_t channels, std::size_t length,
            std::size_t width, T* dx) {
  std::fill(dx, dx + channels * length, T(0));
  const auto pad = static_cast<std::ptrdiff_t>(width / 2);
  const auto len = static_cast<std::ptrdiff_t>(length);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t k = 0; k < width; ++k) {
      const T* row = col.data() + (c * width + k) * length;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
      const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(len, len - shift);
      T* out = dx + c * length + shift;
      for (std::ptrdiff_t t = t0; t < t1; ++t) out[t] += row[t];
    }
  }
}

template <typename T>
T sigmoid(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

template <typename T>
void forward_sample(const Plan& plan, const std::vector<const T*>& params, const T* input,
                    Workspace<T>& ws) {
  ws.acts[0].assign(input, input + plan.layers.front().in.size());
  for (std::size_t i = 0; i < plan.layers.size(); ++i) {
    const auto& lp = plan.layers[i];
    const auto& x = ws.acts[i];
    auto& y = ws.acts[i + 1];
    y.resize(lp.out.size());
    const auto n_in = static_cast<Eigen::Index>(lp.in.size());
    switch (lp.spec.kind) {
      case LayerKind::kDense: {
        const auto n_out = static_cast<Eigen::Index>(lp.out.length);
        CMapM<T> w(params[lp.weight], n_out, n_in);
        MapV<T>(y.data(), n_out).noalias() =
            w * CMapV<T>(x.data(), n_in) + CMapV<T>(params[lp.bias], n_out);
        break;
      }
      case LayerKind::kConv1d: {
        const std::size_t c = lp.in.channels, len = lp.in.length, k = lp.spec.width;
        im2col(x.data(), c, len, k, ws.cols[i]);
        const auto f = static_cast<Eigen::Index>(lp.spec.size);
        const auto ck = static_cast<Eigen::Index>(c * k);
        const auto l = static_cast<Eigen::Index>(len);
        MapM<T> out(y.data(), f, l);
        out.noalias() = CMapM<T>(params[lp.weight], f, ck) * CMapM<T>(ws.cols[i].data(), ck, l);
        out.colwise() += CMapV<T>(params[lp.bias], f);
        break;
      }
      case LayerKind::kMaxPool: {
        const std::size_t w = lp.spec.size, len_out = lp.out.length;
        auto& idx = ws.argmax[i];
        idx.resize(lp.out.size());
        for (std::size_t c = 0; c < lp.in.channels; ++c) {
          for (std::size_t j = 0; j < len_out; ++j) {
            const std::size_t base = c * lp.in.length + j * w;
            std::size_t best = base;
            for (std::size_t q = 1; q < w; ++q) {
              if (x[base + q] > x[best]) best = base + q;
            }
            y[c * len_out + j] = x[best];
            idx[c * len_out + j] = static_cast<std::uint32_t>(best);
          }
        }
        break;
      }
      case LayerKind::kElu:
        for (std::size_t j = 0; j < x.size(); ++j) y[j] = x[j] > T(0) ? x[j] : std::expm1(x[j]);
        break;
      case LayerKind::kSigmoid:
        for (std::size_t j = 0; j < x.size(); ++j) y[j] = sigmoid(x[j]);
        break;
      case LayerKind::kRelu:
        for (std::size_t j = 0; j < x.size(); ++j) y[j] = x[j] > T(0) ? x[j] : T(0);
        break;
      case LayerKind::kFlatten:
        y = x;
        break;
    }
  }
}

// Accumulates parameter gradients for one sample given dL/d(output) in ws.grad.
template <typename T>
void backward_sample(const Plan& plan, const std::vector<const T*>& params, Workspace<T>& ws,
                     std::vector<std::vector<T>>& grads) {
  for (std::size_t ii = plan.layers.size(); ii-- > 0;) {
    const auto& lp = plan.layers[ii];
    const auto& x = ws.acts[ii];
    const auto& y = ws.acts[ii + 1];
    const auto& dy = ws.grad;
    auto& dx = ws.grad_next;
    const bool need_dx = ii > 0;
    dx.resize(lp.in.size());
    switch (lp.spec.kind) {
      case LayerKind::kDense: {
        const auto n_in = static_cast<Eigen::Index>(lp.in.size());
        const auto n_out = static_cast<Eigen::Index>(lp.out.length);
        CMapV<T> g(dy.data(), n_out);
        CMapV<T> xv(x.data(), n_in);
        MapM<T>(grads[lp.weight].data(), n_out, n_in).noalias() += g * xv.transpose();
        MapV<T>(grads[lp.bias].data(), n_out) += g;
        if (need_dx) {
          MapV<T>(dx.data(), n_in).noalias() =
              CMapM<T>(params[lp.weight], n_out, n_in).transpose() * g;
        }
        break;
      }
      case LayerKind::kConv1d: {
        const std::size_t c = lp.in.channels, len = lp.in.length, k = lp.spec.width;
        const auto f = static_cast<Eigen::Index>(lp.spec.size);
        const auto ck = static_cast<Eigen::Index>(c * k);
        const auto l = static_cast<Eigen::Index>(len);
        CMapM<T> g(dy.data(), f, l);
        CMapM<T> col(ws.cols[ii].data(), ck, l);
        MapM<T>(grads[lp.weight].data(), f, ck).noalias() += g * col.transpose();
        MapV<T>(grads[lp.bias].data(), f) += g.rowwise().sum();
        if (need_dx) {
          ws.dcol.resize(static_cast<std::size_t>(ck * l));
          MapM<T>(ws.dcol.data(), ck, l).noalias() =
              CMapM<T>(params[lp.weight], f, ck).transpose() * g;
          col2im(ws.dcol, c, len, k, dx.data());
        }
        break;
      }
      case LayerKind::kMaxPool: {
        std::fill(dx.begin(), dx.end(), T(0));
        const auto& idx = ws.argmax[ii];
        for (std::size_t j = 0; j < dy.size(); ++j) dx[idx[j]] += dy[j];
        break;
      }
      case LayerKind::kElu:
        for (std::size_t j = 0; j < dx.size(); ++j) {
          dx[j] = x[j] > T(0) ? dy[j] : dy[j] * (y[j] + T(1));
        }
        break;
      case LayerKind::kSigmoid:
        for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = dy[j] * y[j] * (T(1) - y[j]);
        break;
      case LayerKind::kRelu:
        for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = x[j] > T(0) ? dy[j] : T(0);
        break;
      case LayerKind::kFlatten:
        dx = dy;
        break;
    }
    std::swap(ws.grad, ws.grad_next);
  }
}

template <typename T>
std::vector<std::vector<T>> zero_grads(const Plan& plan) {
  std::vector<std::vector<T>> g;
  for (const auto& p : plan.params) {
    std::size_t n = 1;
    for (auto d : p.shape) n *= d;
    g.emplace_back(n, T(0));
  }
  return g;
}

// Splits [0, rows) into one contiguous chunk per worker. Chunk boundaries
// depend only on rows and the worker count.
template <typename Fn>
void for_chunks(std::size_t rows, Fn&& fn) {
  const std::size_t chunks = std::max<std::size_t>(1, std::min(thread_count(), rows));
  parallel_for(chunks, [&](std::size_t c) {
    fn(c, rows * c / chunks, rows * (c + 1) / chunks);
  });
}

template <typename T>
struct BatchResult {
  std::vector<std::vector<T>> grads;
  double loss = 0.0;
};

template <typename T>
BatchResult<T> batch_gradients(const Plan& plan, const std::vector<const T*>& params,
                               const T* inputs, const T* targets, std::size_t rows) {
  const std::size_t in_dim = plan.layers.front().in.size();
  const std::size_t out_dim = plan.layers.back().out.size();
  const std::size_t chunks = std::max<std::size_t>(1, std::min(thread_count(), rows));
  std::vector<BatchResult<T>> partial(chunks);
  const T scale = T(2) / static_cast<T>(rows * out_dim);
  for_chunks(rows, [&](std::size_t c, std::size_t r0, std::size_t r1) {
    Workspace<T> ws(plan);
    auto& part = partial[c];
    part.grads = zero_grads<T>(plan);
    for (std::size_t r = r0; r < r1; ++r) {
      forward_sample(plan, params, inputs + r * in_dim, ws);
      const auto& y = ws.acts.back();
      ws.grad.resize(out_dim);
      for (std::size_t j = 0; j < out_dim; ++j) {
        const T diff = y[j] - targets[r * out_dim + j];
        part.loss += static_cast<double>(diff) * static_cast<double>(diff);
        ws.grad[j] = scale * diff;
      }
      backward_sample(plan, params, ws, part.grads);
    }
  });
  BatchResult<T> total = std::move(partial[0]);
  for (std::size_t c = 1; c < chunks; ++c) {
    for (std::size_t p = 0; p < total.grads.size(); ++p) {
      for (std::size_t j = 0; j < total.grads[p].size(); ++j) {
        total.grads[p][j] += partial[c].grads[p][j];
      }
    }
    total.loss += partial[c].loss;
  }
  total.loss /= static_cast<double>(rows * out_dim);
  return total;
}

std::vector<const float*> param_ptrs(const Model& model) {
  std::vector<const float*> p;
  for (const auto& prm : model.params) p.push_back(prm.value.data.data());
  return p;
}

std::vector<const double*> param_ptrs(const std::vector<std::vector<double>>& params) {
  std::vector<const double*> p;
  for (const auto& v : params) p.push_back(v.data());
  return p;
}

void check_params(const Plan& plan, std::size_t n_params) {
  if (n_params != plan.params.size()) {
    throw ShapeMismatch("model has " + std::to_string(n_params) + " tensors, architecture needs " +
                        std::to_string(plan.params.size()));
  }
}

void check_batch(const Batch& b, std::size_t cols, const char* what) {
  if (b.cols != cols) {
    throw ShapeMismatch(std::string(what) + " width " + std::to_string(b.cols) + ", expected " +
                        std::to_string(cols));
  }
  if (b.values.size() != b.rows * b.cols) {
    throw ShapeMismatch(std::string(what) + " holds " + std::to_string(b.values.size()) +
                        " values for " + std::to_string(b.rows) + " rows");
  }
}

}  // namespace

Model Model::initialize(const ModelSpec& spec, std::uint64_t seed) {
  const auto plan = make_plan(spec);
  Model m;
  m.spec = spec;
  for (std::size_t p = 0; p < plan.params.size(); ++p) {
    const auto& info = plan.params[p];
    Parameter prm{info.name, {info.shape, {}}};
    prm.value.data.assign(prm.value.numel(), 0.0f);
    if (!info.is_bias) {
      Rng rng(derive_seed(seed, p));
      const double bound = std::sqrt(6.0 / static_cast<double>(info.fan_in));
      for (auto& w : prm.value.data) w = static_cast<float>(rng.uniform(-bound, bound));
    }
    m.params.push_back(std::move(prm));
  }
  return m;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.numel();
  return n;
}

std::vector<float> forward(const Model& model, const Batch& inputs) {
  const auto plan = make_plan(model.spec);
  check_params(plan, model.params.size());
  check_batch(inputs, model.spec.input_dim, "input batch");
  const auto params = param_ptrs(model);
  const std::size_t out_dim = plan.layers.back().out.size();
  std::vector<float> out(inputs.rows * out_dim);
  for_chunks(inputs.rows, [&](std::size_t, std::size_t r0, std::size_t r1) {
    Workspace<float> ws(plan);
    for (std::size_t r = r0; r < r1; ++r) {
      forward_sample(plan, params, inputs.values.data() + r * inputs.cols, ws);
      std::copy(ws.acts.back().begin(), ws.acts.back().end(), out.begin() + r * out_dim);
    }
  });
  return out;
}

Gradients backward(const Model& model, const Batch& inputs, const Batch& targets) {
  const auto plan = make_plan(model.spec);
  check_params(plan, model.params.size());
  check_batch(inputs, model.spec.input_dim, "input batch");
  check_batch(targets, head_dim(model.spec.head), "target batch");
  if (inputs.rows != targets.rows) throw ShapeMismatch("input and target row counts differ");
  if (inputs.rows == 0) throw EmptyInput("empty batch");
  auto r = batch_gradients<float>(plan, param_ptrs(model), inputs.values.data(),
                                  targets.values.data(), inputs.rows);
  return {std::move(r.grads), r.loss};
}

GradientsDouble backward_double(const ModelSpec& spec,
                                const std::vector<std::vector<double>>& params,
                                std::span<const double> inputs, std::span<const double> targets,
                                std::size_t rows) {
  const auto plan = make_plan(spec);
  check_params(plan, params.size());
  if (rows == 0) throw EmptyInput("empty batch");
  if (inputs.size() != rows * spec.input_dim || targets.size() != rows * head_dim(spec.head)) {
    throw ShapeMismatch("batch size does not match the architecture");
  }
  auto r = batch_gradients<double>(plan, param_ptrs(params), inputs.data(), targets.data(), rows);
  return {std::move(r.grads), r.loss};
}

double loss_double(const ModelSpec& spec, const std::vector<std::vector<double>>& params,
                   std::span<const double> inputs, std::span<const double> targets,
                   std::size_t rows) {
  const auto plan = make_plan(spec);
  check_params(plan, params.size());
  const auto ptrs = param_ptrs(params);
  const std::size_t out_dim = plan.layers.back().out.size();
  Workspace<double> ws(plan);
  double sum = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    forward_sample(plan, ptrs, inputs.data() + r * spec.input_dim, ws);
    for (std::size_t j = 0; j < out_dim; ++j) {
      const double d = ws.acts.back()[j] - targets[r * out_dim + j];
      sum += d * d;
    }
  }
  return sum / static_cast<double>(rows * out_dim);
}

AdamState adam_init(const Model& model) {
  AdamState s;
  for (const auto& p : model.params) {
    s.m.emplace_back(p.value.numel(), 0.0f);
    s.v.emplace_back(p.value.numel(), 0.0f);
  }
  return s;
}

void adam_step(Model& model, AdamState& state, const Gradients& grads, const TrainConfig& c) {
  if (grads.params.size() != model.params.size() || state.m.size() != model.params.size()) {
    throw ShapeMismatch("gradient and parameter lists differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const float b1 = static_cast<float>(c.beta1), b2 = static_cast<float>(c.beta2);
  for (std::size_t p = 0; p < model.params.size(); ++p) {
    auto& w = model.params[p].value.data;
    const auto& g = grads.params[p];
    if (g.size() != w.size()) throw ShapeMismatch("gradient tensor size differs");
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      w[j] -= static_cast<float>(c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon));
    }
  }
}

double evaluate_loss(const Model& model, const Samples& set) {
  const std::size_t n = set.size();
  if (n == 0) throw EmptyInput("empty evaluation set");
  const auto out = forward(model, {n, set.input_dim, set.inputs});
  if (out.size() != set.targets.size()) throw ShapeMismatch("target width differs from head");
  double sum = 0.0;
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double d = static_cast<double>(out[j]) - set.targets[j];
    sum += d * d;
  }
  return sum / static_cast<double>(out.size());
}

namespace {

void check_samples(const ModelSpec& spec, const Samples& s, const char* what) {
  if (s.size() == 0) throw EmptyInput(std::string(what) + " set is empty");
  if (s.input_dim != spec.input_dim) {
    throw ShapeMismatch(std::string(what) + " inputs have dimension " +
                        std::to_string(s.input_dim) + ", model expects " +
                        std::to_string(spec.input_dim));
  }
  if (s.target_dim != head_dim(spec.head) || s.targets.size() != s.size() * s.target_dim) {
    throw ShapeMismatch(std::string(what) + " targets do not match the output head");
  }
}

}  // namespace

TrainResult train(const ModelSpec& spec, const Samples& train_set, const Samples& dev_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  check_samples(spec, train_set, "training");
  check_samples(spec, dev_set, "development");
  if (config.batch_size == 0) throw InvalidArgument("batch size must be positive");

  Model model = Model::initialize(spec, derive_seed(config.seed, 0x1417));
  AdamState adam = adam_init(model);
  TrainResult result;
  result.model = model;
  double best = std::numeric_limits<double>::infinity();

  const std::size_t n = train_set.size();
  const std::size_t in_dim = train_set.input_dim, out_dim = train_set.target_dim;
  std::vector<float> xb, tb;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double train_sum = 0.0;
    for (const auto& idx : batches(n, config.batch_size, config.seed, epoch)) {
      xb.resize(idx.size() * in_dim);
      tb.resize(idx.size() * out_dim);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        std::copy_n(train_set.inputs.begin() + idx[r] * in_dim, in_dim, xb.begin() + r * in_dim);
        std::copy_n(train_set.targets.begin() + idx[r] * out_dim, out_dim,
                    tb.begin() + r * out_dim);
      }
      const auto g = backward(model, {idx.size(), in_dim, xb}, {idx.size(), out_dim, tb});
      if (!std::isfinite(g.loss)) {
        throw Divergence("training loss became non-finite in epoch " + std::to_string(epoch));
      }
      adam_step(model, adam, g, config);
      train_sum += g.loss * static_cast<double>(idx.size());
    }
    EpochRecord rec{epoch, train_sum / static_cast<double>(n), evaluate_loss(model, dev_set)};
    if (!std::isfinite(rec.dev_loss)) {
      throw Divergence("development loss became non-finite in epoch " + std::to_string(epoch));
    }
    if (rec.dev_loss < best) {
      best = rec.dev_loss;
      result.model.params = model.params;
      result.model.provenance.best_epoch = epoch;
      result.model.provenance.dev_loss = rec.dev_loss;
    }
    result.curve.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.model.provenance.train = config;
  result.model.provenance.dataset_fingerprint = train_set.fingerprint;
  return result;
}

namespace {

BandValues head_to_alpha(OutputHead head, const float* y) {
  BandValues a{};
  for (std::size_t b = 0; b < kNumBands; ++b) {
    double v = y[b];
    if (head == OutputHead::kInverseAlpha) v = v > 0.0 ? 1.0 / v : 1.0;
    a[b] = std::clamp(v, 0.0, 1.0);
  }
  return a;
}

}  // namespace

std::vector<BandValues> predict_batch(const Model& model, const Batch& inputs) {
  const auto out = forward(model, inputs);
  const std::size_t d = head_dim(model.spec.head);
  std::vector<BandValues> res(inputs.rows);
  for (std::size_t r = 0; r < inputs.rows; ++r) {
    res[r] = head_to_alpha(model.spec.head, out.data() + r * d);
  }
  return res;
}

BandValues predict(const Model& model, std::span<const float> input) {
  return predict_batch(model, {1, input.size(), input}).front();
}

std::vector<float> make_target(OutputHead head, const BandValues& alpha_bar,
                               const BandValues& s_bar) {
  std::vector<float> t;
  for (double a : alpha_bar) {
    if (head == OutputHead::kInverseAlpha) {
      if (!(a > 0.0)) throw DomainError("inverse target needs a positive mean absorption");
      a = 1.0 / a;
    }
    t.push_back(static_cast<float>(a));
  }
  if (head == OutputHead::kAlphaAndScattering) {
    for (double s : s_bar) t.push_back(static_cast<float>(s));
  }
  return t;
}

// Model file layout, all integers little-endian u32:
//   "ABSK" | version | header length | header JSON | tensor count |
//   per tensor: name length, name, rank, dims..., float32 values.

namespace {

constexpr char kMagic[4] = {'A', 'B', 'S', 'K'};
constexpr std::uint32_t kFormatVersion = 1;

std::string_view layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv1d: return "conv1d";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kElu: return "elu";
    case LayerKind::kSigmoid: return "sigmoid";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kFlatten: return "flatten";
  }
  return "?";
}

LayerKind layer_kind_from_name(const std::string& s) {
  for (auto k : {LayerKind::kDense, LayerKind::kConv1d, LayerKind::kMaxPool, LayerKind::kElu,
                 LayerKind::kSigmoid, LayerKind::kRelu, LayerKind::kFlatten}) {
    if (layer_kind_name(k) == s) return k;
  }
  throw InvalidArgument("unknown layer kind '" + s + "'");
}

json header_json(const Model& m) {
  json layers = json::array();
  for (const auto& l : m.spec.hidden) {
    json j{{"kind", layer_kind_name(l.kind)}};
    if (l.kind == LayerKind::kDense) j["out"] = l.size;
    if (l.kind == LayerKind::kConv1d) {
      j["filters"] = l.size;
      j["width"] = l.width;
    }
    if (l.kind == LayerKind::kMaxPool) j["width"] = l.size;
    layers.push_back(j);
  }
  const auto& p = m.provenance;
  return {{"name", m.spec.name},
          {"input_dim", m.spec.input_dim},
          {"head", head_name(m.spec.head)},
          {"hidden", layers},
          {"provenance",
           {{"batch_size", p.train.batch_size},
            {"learning_rate", p.train.learning_rate},
            {"epochs", p.train.epochs},
            {"beta1", p.train.beta1},
            {"beta2", p.train.beta2},
            {"epsilon", p.train.epsilon},
            {"seed", p.train.seed},
            {"dataset", p.dataset_fingerprint},
            {"best_epoch", p.best_epoch},
            {"dev_loss", p.dev_loss},
            {"config", p.config}}}};
}

void spec_from_header(const json& h, Model& m) {
  m.spec.name = h.at("name").get<std::string>();
  m.spec.input_dim = h.at("input_dim").get<std::size_t>();
  m.spec.head = head_from_name(h.at("head").get<std::string>());
  for (const auto& j : h.at("hidden")) {
    LayerSpec l;
    l.kind = layer_kind_from_name(j.at("kind").get<std::string>());
    if (l.kind == LayerKind::kDense) l.size = j.at("out").get<std::size_t>();
    if (l.kind == LayerKind::kConv1d) {
      l.size = j.at("filters").get<std::size_t>();
      l.width = j.at("width").get<std::size_t>();
    }
    if (l.kind == LayerKind::kMaxPool) l.size = j.at("width").get<std::size_t>();
    m.spec.hidden.push_back(l);
  }
  const auto& p = h.at("provenance");
  auto& pr = m.provenance;
  pr.train.batch_size = p.at("batch_size").get<std::size_t>();
  pr.train.learning_rate = p.at("learning_rate").get<double>();
  pr.train.epochs = p.at("epochs").get<std::size_t>();
  pr.train.beta1 = p.at("beta1").get<double>();
  pr.train.beta2 = p.at("beta2").get<double>();
  pr.train.epsilon = p.at("epsilon").get<double>();
  pr.train.seed = p.at("seed").get<std::uint64_t>();
  pr.dataset_fingerprint = p.at("dataset").get<std::string>();
  pr.best_epoch = p.at("best_epoch").get<std::size_t>();
  pr.dev_loss = p.at("dev_loss").get<double>();
  pr.config = p.value("config", std::string());
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Cursor {
 public:
  Cursor(const std::string& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

  CorruptFile error(const std::string& what, std::size_t at) const {
    return CorruptFile(path_ + ": " + what + " at offset " + std::to_string(at));
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw error(std::string("truncated ") + what + " (need " + std::to_string(n) +
                      " bytes, have " + std::to_string(bytes_.size() - pos_) + ")",
                  pos_);
    }
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  const std::string& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_model(const Model& model, const std::filesystem::path& path) {
  const auto plan = make_plan(model.spec);
  check_params(plan, model.params.size());
  std::string out(kMagic, 4);
  put_u32(out, kFormatVersion);
  const auto header = header_json(model).dump();
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  put_u32(out, static_cast<std::uint32_t>(model.params.size()));
  for (const auto& p : model.params) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_u32(out, static_cast<std::uint32_t>(p.value.shape.size()));
    for (auto d : p.value.shape) put_u32(out, static_cast<std::uint32_t>(d));
    if (p.value.data.size() != p.value.numel()) throw ShapeMismatch("tensor " + p.name);
    for (float v : p.value.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  f.flush();
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

Model load_model(const std::filesystem::path& path, std::optional<std::size_t> expected_input_dim) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open model file '" + path.string() + "'");
  const std::string bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  Cursor cur(bytes, path.string());

  if (cur.str(4, "magic") != std::string(kMagic, 4)) throw cur.error("bad magic", 0);
  const auto version_at = cur.offset();
  if (cur.u32("version") != kFormatVersion) throw cur.error("unsupported version", version_at);
  const auto header_len = cur.u32("header length");
  const auto header_at = cur.offset();
  const auto header = cur.str(header_len, "header");

  Model m;
  try {
    spec_from_header(json::parse(header), m);
  } catch (const json::exception& e) {
    throw cur.error(std::string("malformed header (") + e.what() + ")", header_at);
  } catch (const InvalidArgument& e) {
    throw cur.error(std::string("malformed header (") + e.what() + ")", header_at);
  }
  if (expected_input_dim && *expected_input_dim != m.spec.input_dim) {
    throw ShapeMismatch(path.string() + ": model input dimension " +
                        std::to_string(m.spec.input_dim) + ", expected " +
                        std::to_string(*expected_input_dim));
  }
  const auto plan = make_plan(m.spec);

  const auto count_at = cur.offset();
  const auto count = cur.u32("tensor count");
  if (count != plan.params.size()) {
    throw ShapeMismatch(path.string() + ": " + std::to_string(count) + " tensors at offset " +
                        std::to_string(count_at) + ", architecture needs " +
                        std::to_string(plan.params.size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const auto tensor_at = cur.offset();
    Parameter p;
    p.name = cur.str(cur.u32("tensor name length"), "tensor name");
    const auto rank = cur.u32("tensor rank");
    if (rank > 8) throw cur.error("implausible tensor rank " + std::to_string(rank), tensor_at);
    for (std::uint32_t d = 0; d < rank; ++d) p.value.shape.push_back(cur.u32("tensor dims"));
    const auto& want = plan.params[i];
    if (p.name != want.name || p.value.shape != want.shape) {
      throw ShapeMismatch(path.string() + ": tensor '" + p.name + "' at offset " +
                          std::to_string(tensor_at) + " does not match architecture tensor '" +
                          want.name + "'");
    }
    const std::size_t n = p.value.numel();
    cur.need(n * 4, "tensor data");
    p.value.data.resize(n);
    for (auto& v : p.value.data) v = std::bit_cast<float>(cur.u32("tensor data"));
    m.params.push_back(std::move(p));
  }
  if (!cur.at_end()) throw cur.error("trailing bytes", cur.offset());
  return m;
}

}  // namespace roomabs::nn
