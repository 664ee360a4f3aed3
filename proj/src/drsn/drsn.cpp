#include "wsr/drsn.hpp"

#include <bit>
#include <cmath>

#include "wsr/error.hpp"
#include "wsr/rng.hpp"

namespace wsr::drsn {

void DrsnConfig::validate() const {
  auto fail = [](const std::string& msg) { throw InvalidArgument("DrsnConfig: " + msg); };
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (input_len < 32 || !std::has_single_bit(input_len))
    fail("input_len must be a power of two >= 32, got " + std::to_string(input_len));
  if (num_stacks < 1) fail("num_stacks must be >= 1");
  if (num_stacks >= 63 || (input_len >> num_stacks) < 1)
    fail("input_len / 2^num_stacks must be >= 1");
  if (channels < 1) fail("channels must be >= 1");
  if (rsu_kernel < 1 || rsu_kernel % 2 == 0) fail("rsu_kernel must be odd");
}

std::size_t analytic_param_count(const DrsnConfig& cfg) {
  cfg.validate();
  const std::size_t C = cfg.channels, k = cfg.rsu_kernel, S = cfg.num_stacks;
  const std::size_t F = C * cfg.feature_len(), H = cfg.fc_hidden, N = cfg.num_classes;
  const std::size_t entry = (2 * C + C) + (S - 1) * (C * C + C);
  const std::size_t rsus = 2 * S * (C * C * k + C + 2 * (C * C + C));
  const std::size_t head = H > 0 ? F * H + H + H * N + N : F * N + N;
  return entry + rsus + head;
}

template <typename T>
template <typename Self, typename F>
void DrsnModel<T>::visit(Self& self, F&& f) {
  auto dense = [&](const std::string& p, auto& d) {
    f(p + ".weight", d.weight);
    f(p + ".bias", d.bias);
  };
  for (std::size_t s = 0; s < self.stacks.size(); ++s) {
    auto& st = self.stacks[s];
    const std::string sp = "stack" + std::to_string(s);
    dense(sp + ".proj", st.projection);
    for (std::size_t u = 0; u < st.units.size(); ++u) {
      const std::string up = sp + ".rsu" + std::to_string(u);
      dense(up + ".conv", st.units[u].conv);
      dense(up + ".shrink.fc1", st.units[u].shrink.fc1);
      dense(up + ".shrink.fc2", st.units[u].shrink.fc2);
    }
  }
  if (self.hidden) dense("head.hidden", *self.hidden);
  dense("head.out", self.classifier);
}

template <typename T>
DrsnModel<T>::DrsnModel(const DrsnConfig& config) : config_(config) {
  config_.validate();
  const std::size_t C = config_.channels, k = config_.rsu_kernel;
  auto conv = [](std::size_t cout, std::size_t cin, std::size_t kk) {
    return Conv<T>{ag::Tensor<T>({cout, cin, kk}), ag::Tensor<T>({cout})};
  };
  auto dense = [](std::size_t out, std::size_t in) {
    return Dense<T>{ag::Tensor<T>({out, in}), ag::Tensor<T>({out})};
  };
  for (std::size_t s = 0; s < config_.num_stacks; ++s) {
    ResidualStack<T> st;
    st.projection = conv(C, s == 0 ? 2 : C, 1);
    for (auto& u : st.units) {
      u.conv = conv(C, C, k);
      u.shrink.fc1 = dense(C, C);
      u.shrink.fc2 = dense(C, C);
    }
    stacks.push_back(std::move(st));
  }
  const std::size_t features = C * config_.feature_len();
  if (config_.fc_hidden > 0) {
    hidden = dense(config_.fc_hidden, features);
    classifier = dense(config_.num_classes, config_.fc_hidden);
  } else {
    classifier = dense(config_.num_classes, features);
  }

  Rng rng(config_.seed);
  visit(*this, [&](const std::string& name, ag::Tensor<T>& t) {
    if (name.ends_with(".weight")) {
      const auto& shape = t.shape();
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (T& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    t.set_requires_grad(true);
  });
}

template <typename T>
std::vector<NamedTensor<T>> DrsnModel<T>::named_parameters() const {
  std::vector<NamedTensor<T>> out;
  visit(*this, [&](const std::string& name, const ag::Tensor<T>& t) { out.push_back({name, t}); });
  return out;
}

template <typename T>
std::vector<ag::Tensor<T>> DrsnModel<T>::parameters() const {
  std::vector<ag::Tensor<T>> out;
  visit(*this, [&](const std::string&, const ag::Tensor<T>& t) { out.push_back(t); });
  return out;
}

template <typename T>
std::size_t DrsnModel<T>::param_count() const {
  std::size_t n = 0;
  visit(*this, [&](const std::string&, const ag::Tensor<T>& t) { n += t.numel(); });
  return n;
}

template <typename T>
ag::Tensor<T>& DrsnModel<T>::parameter(std::string_view name) {
  ag::Tensor<T>* found = nullptr;
  visit(*this, [&](const std::string& n, ag::Tensor<T>& t) {
    if (n == name) found = &t;
  });
  if (!found) throw InvalidArgument("DrsnModel: no parameter named '" + std::string(name) + "'");
  return *found;
}

template <typename T>
ag::Tensor<T> soft_threshold(ag::Tape<T>* tape, const ag::Tensor<T>& x, const ag::Tensor<T>& tau) {
  if (x.rank() != 3 || tau.rank() != 2 || tau.dim(0) != x.dim(0) || tau.dim(1) != x.dim(1))
    throw ShapeError("soft_threshold: x " + ag::shape_str(x.shape()) + " vs tau " +
                     ag::shape_str(tau.shape()));
  for (T t : tau.data())
    if (!(t >= T(0))) throw InvalidArgument("soft_threshold: thresholds must be >= 0");

  const std::size_t rows = x.dim(0) * x.dim(1), len = x.dim(2);
  ag::Tensor<T> out(x.shape());
  const T* xs = x.data().data();
  const T* ts = tau.data().data();
  T* ys = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T t = ts[r];
    for (std::size_t l = 0; l < len; ++l) {
      const T v = xs[r * len + l];
      ys[r * len + l] = v > t ? v - t : (v < -t ? v + t : T(0));
    }
  }

  if (ag::should_record(tape, {&x, &tau})) {
    tape->record(out, {x, tau}, [x, tau, rows, len](ag::Tensor<T>& o) mutable {
      auto gx = x.grad_for_accumulation();
      auto gt = tau.grad_for_accumulation();
      auto g = o.grad();
      const T* xs = x.data().data();
      const T* ts = tau.data().data();
      for (std::size_t r = 0; r < rows; ++r) {
        const T t = ts[r];
        T acc = 0;
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t i = r * len + l;
          const T v = xs[i];
          if (v > t) {
            if (!gx.empty()) gx[i] += g[i];
            acc -= g[i];
          } else if (v < -t) {
            if (!gx.empty()) gx[i] += g[i];
            acc += g[i];
          }
        }
        if (!gt.empty()) gt[r] += acc;
      }
    });
  }
  return out;
}

template <typename T>
ag::Tensor<T> shrinkage_block(ag::Tape<T>* tape, const ag::Tensor<T>& x,
                              const ShrinkageBlock<T>& block) {
  if (x.rank() != 3 || x.dim(1) != block.fc1.weight.dim(1))
    throw ShapeError("shrinkage_block: input " + ag::shape_str(x.shape()) +
                     " does not match block width " + std::to_string(block.fc1.weight.dim(1)));
  const auto mean_abs = ag::gap(tape, ag::abs(tape, x));
  const auto h = ag::relu(tape, ag::linear(tape, mean_abs, block.fc1.weight, block.fc1.bias));
  const auto z = ag::linear(tape, h, block.fc2.weight, block.fc2.bias);
  return ag::mul(tape, ag::sigmoid(tape, z), mean_abs);
}

template <typename T>
ag::Tensor<T> rsu_forward(ag::Tape<T>* tape, const ag::Tensor<T>& x, const ShrinkageUnit<T>& unit) {
  if (x.rank() != 3 || x.dim(1) != unit.conv.weight.dim(0))
    throw ShapeError("rsu_forward: input " + ag::shape_str(x.shape()) + " vs unit channels " +
                     std::to_string(unit.conv.weight.dim(0)));
  const auto r =
      ag::conv1d(tape, ag::relu(tape, x), unit.conv.weight, unit.conv.bias, ag::Padding::Same);
  const auto tau = shrinkage_block(tape, r, unit.shrink);
  return ag::add(tape, x, soft_threshold(tape, r, tau));
}

template <typename T>
ag::Tensor<T> residual_stack(ag::Tape<T>* tape, const ag::Tensor<T>& x,
                             const ResidualStack<T>& stack) {
  if (x.rank() != 3 || x.dim(2) < 2)
    throw ShapeError("residual_stack: need [B x C x L] with L >= 2, got " + ag::shape_str(x.shape()));
  auto h = ag::conv1d(tape, x, stack.projection.weight, stack.projection.bias, ag::Padding::Same);
  for (const auto& unit : stack.units) h = rsu_forward(tape, h, unit);
  return ag::maxpool1d(tape, h);
}

template <typename T>
ag::Tensor<T> drsn_forward(ag::Tape<T>* tape, const DrsnModel<T>& model, const ag::Tensor<T>& batch) {
  const DrsnConfig& cfg = model.config();
  if (batch.rank() != 3 || batch.dim(1) != 2 || batch.dim(2) != cfg.input_len)
    throw ShapeError("drsn_forward: expected [B x 2 x " + std::to_string(cfg.input_len) + "], got " +
                     ag::shape_str(batch.shape()));
  ag::Tensor<T> h = batch;
  for (const auto& stack : model.stacks) h = residual_stack(tape, h, stack);
  h = ag::reshape(tape, h, {batch.dim(0), h.dim(1) * h.dim(2)});
  if (model.hidden)
    h = ag::relu(tape, ag::linear(tape, h, model.hidden->weight, model.hidden->bias));
  return ag::linear(tape, h, model.classifier.weight, model.classifier.bias);
}

template class DrsnModel<float>;
template class DrsnModel<double>;

#define WSR_INSTANTIATE_DRSN(T)                                                                   \
  template ag::Tensor<T> soft_threshold(ag::Tape<T>*, const ag::Tensor<T>&, const ag::Tensor<T>&); \
  template ag::Tensor<T> shrinkage_block(ag::Tape<T>*, const ag::Tensor<T>&,                      \
                                         const ShrinkageBlock<T>&);                               \
  template ag::Tensor<T> rsu_forward(ag::Tape<T>*, const ag::Tensor<T>&, const ShrinkageUnit<T>&); \
  template ag::Tensor<T> residual_stack(ag::Tape<T>*, const ag::Tensor<T>&,                       \
                                        const ResidualStack<T>&);                                 \
  template ag::Tensor<T> drsn_forward(ag::Tape<T>*, const DrsnModel<T>&, const ag::Tensor<T>&);

WSR_INSTANTIATE_DRSN(float)
WSR_INSTANTIATE_DRSN(double)

}  // namespace wsr::drsn
