#include "wsr/gradsuite.hpp"

#include <exception>
#include <utility>

#include "wsr/drsn.hpp"
#include "wsr/ops.hpp"
#include "wsr/rng.hpp"

namespace wsr::gradsuite {

namespace {

using ag::Padding;
using ag::Shape;
using ag::Tape;
using Tensor = ag::Tensor<double>;
using TensorFn = std::function<Tensor(Tape<double>*, const Tensor&)>;

Tensor uniform(Rng& rng, Shape shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Magnitudes drawn from [margin, 1] with a random sign.
Tensor away_from_zero(Rng& rng, Shape shape, double margin) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = (rng.coin() ? 1.0 : -1.0) * rng.uniform(margin, 1.0);
  return t;
}

// Magnitudes avoiding [tau - gap, tau + gap].
Tensor away_from(Rng& rng, Shape shape, double tau, double gap) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) {
    const double mag = rng.coin() ? rng.uniform(0.0, tau - gap) : rng.uniform(tau + gap, 1.0);
    v = (rng.coin() ? 1.0 : -1.0) * mag;
  }
  return t;
}

// Reduces a tensor-valued f to a scalar with fixed random weights so the
// upstream gradient is not uniform.
Case weighted(std::string name, Tensor x, TensorFn f, std::uint64_t seed,
              double tolerance = kOperatorTolerance) {
  return {std::move(name), tolerance, [x, f, seed] {
            const Shape out_shape = f(nullptr, x).shape();
            Rng rng(seed);
            Tensor w = away_from_zero(rng, out_shape, 0.5);
            ag::ScalarFn g = [f, w](Tape<double>* tape, const Tensor& v) {
              return ag::sum(tape, ag::mul(tape, f(tape, v), w));
            };
            return ag::finite_diff_check(g, x);
          }};
}

Tensor random_simplex_rows(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor t({rows, cols});
  auto d = t.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += d[r * cols + c] = rng.uniform(0.1, 1.0);
    for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] /= total;
  }
  return t;
}

}  // namespace

std::vector<Case> operator_cases(std::uint64_t seed) {
  std::vector<Case> cases;
  std::uint64_t index = 0;
  auto next_seed = [&] { return derive_seed(seed, {index++}); };
  Rng rng(derive_seed(seed, {0xC0FFEE}));

  {
    const Tensor x = uniform(rng, {2, 3, 16}, -1, 1);
    const Tensor w = uniform(rng, {4, 3, 3}, -1, 1);
    const Tensor b = uniform(rng, {4}, -1, 1);
    cases.push_back(weighted("conv1d.input", x, [w, b](Tape<double>* t, const Tensor& v) {
      return ag::conv1d(t, v, w, b, Padding::Same);
    }, next_seed()));
    cases.push_back(weighted("conv1d.weight", w, [x, b](Tape<double>* t, const Tensor& v) {
      return ag::conv1d(t, x, v, b, Padding::Same);
    }, next_seed()));
    cases.push_back(weighted("conv1d.bias", b, [x, w](Tape<double>* t, const Tensor& v) {
      return ag::conv1d(t, x, w, v, Padding::Same);
    }, next_seed()));
    cases.push_back(weighted("conv1d.valid.input", x, [w, b](Tape<double>* t, const Tensor& v) {
      return ag::conv1d(t, v, w, b, Padding::Valid);
    }, next_seed()));
    const Tensor w4 = uniform(rng, {4, 3, 4}, -1, 1);
    cases.push_back(weighted("conv1d.even_kernel.weight", w4, [x, b](Tape<double>* t, const Tensor& v) {
      return ag::conv1d(t, x, v, b, Padding::Same);
    }, next_seed()));
  }
  {
    const Tensor x = uniform(rng, {3, 8}, -1, 1);
    const Tensor w = uniform(rng, {5, 8}, -1, 1);
    const Tensor b = uniform(rng, {5}, -1, 1);
    cases.push_back(weighted("linear.input", x, [w, b](Tape<double>* t, const Tensor& v) {
      return ag::linear(t, v, w, b);
    }, next_seed()));
    cases.push_back(weighted("linear.weight", w, [x, b](Tape<double>* t, const Tensor& v) {
      return ag::linear(t, x, v, b);
    }, next_seed()));
    cases.push_back(weighted("linear.bias", b, [x, w](Tape<double>* t, const Tensor& v) {
      return ag::linear(t, x, w, v);
    }, next_seed()));
  }
  cases.push_back(weighted("relu", away_from_zero(rng, {2, 4, 8}, 0.1),
                           [](Tape<double>* t, const Tensor& v) { return ag::relu(t, v); },
                           next_seed()));
  cases.push_back(weighted("sigmoid", uniform(rng, {2, 4, 8}, -3, 3),
                           [](Tape<double>* t, const Tensor& v) { return ag::sigmoid(t, v); },
                           next_seed()));
  cases.push_back(weighted("abs", away_from_zero(rng, {2, 4, 8}, 0.1),
                           [](Tape<double>* t, const Tensor& v) { return ag::abs(t, v); },
                           next_seed()));
  {
    Tensor x({2, 4, 16});
    auto d = x.data();
    for (std::size_t i = 0; i < d.size(); i += 2) {
      d[i] = rng.uniform(-1, 1);
      d[i + 1] = d[i] + (rng.coin() ? 1.0 : -1.0) * rng.uniform(0.1, 0.5);
    }
    cases.push_back(weighted("maxpool1d", x,
                             [](Tape<double>* t, const Tensor& v) { return ag::maxpool1d(t, v); },
                             next_seed()));
  }
  cases.push_back(weighted("gap", uniform(rng, {2, 4, 16}, -1, 1),
                           [](Tape<double>* t, const Tensor& v) { return ag::gap(t, v); },
                           next_seed()));
  cases.push_back(weighted("softmax", uniform(rng, {3, 5}, -2, 2),
                           [](Tape<double>* t, const Tensor& v) { return ag::softmax(t, v); },
                           next_seed()));
  {
    const Tensor targets = random_simplex_rows(rng, 3, 5);
    cases.push_back(weighted("softmax_cross_entropy", uniform(rng, {3, 5}, -2, 2),
                             [targets](Tape<double>* t, const Tensor& v) {
                               return ag::softmax_cross_entropy(t, v, targets);
                             },
                             next_seed()));
  }
  {
    const Tensor a = uniform(rng, {4, 8}, -1, 1);
    const Tensor b = uniform(rng, {4, 8}, -1, 1);
    cases.push_back(weighted("add", a, [b](Tape<double>* t, const Tensor& v) {
      return ag::add(t, v, b);
    }, next_seed()));
    cases.push_back(weighted("sub.lhs", a, [b](Tape<double>* t, const Tensor& v) {
      return ag::sub(t, v, b);
    }, next_seed()));
    cases.push_back(weighted("sub.rhs", b, [a](Tape<double>* t, const Tensor& v) {
      return ag::sub(t, a, v);
    }, next_seed()));
    cases.push_back(weighted("mul", a, [b](Tape<double>* t, const Tensor& v) {
      return ag::mul(t, v, b);
    }, next_seed()));
    cases.push_back(weighted("mul.same_operand", a, [](Tape<double>* t, const Tensor& v) {
      return ag::mul(t, v, v);
    }, next_seed()));
    cases.push_back(weighted("scale", a, [](Tape<double>* t, const Tensor& v) {
      return ag::scale(t, v, -1.7);
    }, next_seed()));
    cases.push_back(weighted("square", a, [](Tape<double>* t, const Tensor& v) {
      return ag::square(t, v);
    }, next_seed()));
    cases.push_back(weighted("sum", a, [](Tape<double>* t, const Tensor& v) {
      return ag::sum(t, ag::square(t, v));
    }, next_seed()));
    cases.push_back(weighted("mean", a, [](Tape<double>* t, const Tensor& v) {
      return ag::mean(t, ag::square(t, v));
    }, next_seed()));
    cases.push_back(weighted("reshape", a, [](Tape<double>* t, const Tensor& v) {
      return ag::reshape(t, v, {2, 16});
    }, next_seed()));
  }
  {
    const double tau_value = 0.3;
    const Tensor tau = Tensor::full({2, 4}, tau_value);
    cases.push_back(weighted("soft_threshold.x", away_from(rng, {2, 4, 16}, tau_value, 0.1),
                             [tau](Tape<double>* t, const Tensor& v) {
                               return drsn::soft_threshold(t, v, tau);
                             },
                             next_seed()));
    const Tensor x = away_from(rng, {2, 4, 16}, tau_value, 0.15);
    cases.push_back(weighted("soft_threshold.tau", uniform(rng, {2, 4}, 0.25, 0.35),
                             [x](Tape<double>* t, const Tensor& v) {
                               return drsn::soft_threshold(t, x, v);
                             },
                             next_seed()));
  }
  {
    drsn::DrsnConfig cfg;
    cfg.num_classes = 3;
    cfg.input_len = 32;
    cfg.num_stacks = 1;
    cfg.channels = 4;
    cfg.fc_hidden = 0;
    cfg.seed = derive_seed(seed, {0xB10C});
    const drsn::DrsnModel<double> model(cfg);
    const auto unit = model.stacks.front().units.front();
    cases.push_back(weighted("shrinkage_block", away_from_zero(rng, {2, 4, 16}, 0.1),
                             [unit](Tape<double>* t, const Tensor& v) {
                               return drsn::shrinkage_block(t, v, unit.shrink);
                             },
                             next_seed()));
    cases.push_back(weighted("rsu", uniform(rng, {2, 4, 16}, -1, 1),
                             [unit](Tape<double>* t, const Tensor& v) {
                               return drsn::rsu_forward(t, v, unit);
                             },
                             next_seed()));
  }
  return cases;
}

std::vector<Case> model_cases(std::uint64_t seed) {
  drsn::DrsnConfig cfg;
  cfg.num_classes = 3;
  cfg.input_len = 32;
  cfg.num_stacks = 1;
  cfg.channels = 4;
  cfg.fc_hidden = 16;
  cfg.seed = derive_seed(seed, {0xD25});
  const drsn::DrsnModel<double> model(cfg);

  Rng rng(derive_seed(seed, {0xDA7A}));
  const Tensor x = uniform(rng, {2, 2, 32}, -1, 1);
  Tensor targets({2, 3});
  targets.data()[0 * 3 + 0] = 1.0;
  targets.data()[1 * 3 + 2] = 1.0;

  std::vector<Case> cases;
  cases.push_back({"drsn.input", kModelTolerance, [model, x, targets] {
                     ag::ScalarFn f = [model, targets](Tape<double>* t, const Tensor& v) {
                       return ag::softmax_cross_entropy(t, drsn::drsn_forward(t, model, v), targets);
                     };
                     return ag::finite_diff_check(f, x);
                   }});
  for (const auto& p : model.named_parameters()) {
    const std::string name = p.name;
    const Tensor start = p.tensor.detach();
    cases.push_back({"drsn." + name, kModelTolerance, [model, x, targets, name, start] {
                       ag::ScalarFn f = [model, x, targets, name](Tape<double>* t, const Tensor& v) {
                         auto m = model;  // shares storage except for the swapped tensor
                         m.parameter(name) = v;
                         return ag::softmax_cross_entropy(t, drsn::drsn_forward(t, m, x), targets);
                       };
                       return ag::finite_diff_check(f, start);
                     }});
  }
  return cases;
}

std::vector<Case> all_cases(std::uint64_t seed) {
  auto cases = operator_cases(seed);
  auto more = model_cases(seed);
  cases.insert(cases.end(), std::make_move_iterator(more.begin()),
               std::make_move_iterator(more.end()));
  return cases;
}

std::vector<Outcome> run_cases(const std::vector<Case>& cases) {
  std::vector<Outcome> out;
  out.reserve(cases.size());
  for (const auto& c : cases) {
    Outcome o;
    o.name = c.name;
    o.tolerance = c.tolerance;
    try {
      o.result = c.run();
      o.passed = o.result.max_rel_error < c.tolerance;
    } catch (const std::exception& e) {
      o.error = e.what();
      o.passed = false;
    }
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace wsr::gradsuite
