#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rwgan/nets.hpp"
#include "rwgan/rng.hpp"
#include "rwgan/tensor.hpp"

using namespace rwgan;

namespace {

template <class S>
TensorT<S> random_tensor(Shape shape, Rng& rng, bool requires_grad,
                         double lo = -1.0, double hi = 1.0) {
  auto t = TensorT<S>::zeros(shape, requires_grad);
  for (auto& v : t.values()) v = S(rng.uniform(lo, hi));
  return t;
}

// squared-sum readout so every output element contributes a distinct gradient
template <class S>
TensorT<S> readout(const TensorT<S>& y) {
  auto l = loss(y, TensorT<S>::zeros(y.shape()), LossKind::mse);
  return scale(l, S(0.5));
}

template <class S>
GradCheckReport check_op(
    const std::function<TensorT<S>(std::vector<TensorT<S>>&)>& build,
    std::vector<TensorT<S>>& inputs, double h, double tol) {
  return grad_check<S>(build, inputs, h, tol);
}

} // namespace

TEMPLATE_TEST_CASE("gradcheck: linear map is exact", "", float, double) {
  using S = TestType;
  Rng rng(1);
  std::vector<TensorT<S>> inputs{random_tensor<S>({6}, rng, true)};
  auto build = [](std::vector<TensorT<S>>& in) {
    return scale(loss(in[0], TensorT<S>::filled({6}, S(0.25)), LossKind::l1),
                 S(2));
  };
  auto report = check_op<S>(build, inputs, 1e-3, 1e-6);
  INFO("max rel error " << report.max_rel_error);
  CHECK(report.pass);
}

TEST_CASE("gradcheck: conv2d parameter grads vs central differences (f32)") {
  Rng rng(2);
  std::vector<Tensor> inputs{
      random_tensor<float>({1, 2, 6, 6}, rng, true),
      random_tensor<float>({3, 2, 3, 3}, rng, true),
      random_tensor<float>({3}, rng, true),
  };
  auto build = [](std::vector<Tensor>& in) {
    return readout(conv2d(in[0], in[1], in[2], 2, 1));
  };
  auto report = grad_check<float>(build, inputs, 1e-3, 1e-3);
  INFO("max rel error " << report.max_rel_error);
  CHECK(report.pass);
}

namespace {

// one struct per op so the suite below can iterate
template <class S>
struct OpCase {
  std::string name;
  std::function<TensorT<S>(std::vector<TensorT<S>>&)> build;
  std::vector<TensorT<S>> inputs;
};

template <class S>
std::vector<OpCase<S>> op_cases(uint64_t seed) {
  Rng rng(seed);
  std::vector<OpCase<S>> cases;

  {
    OpCase<S> c;
    c.name = "conv2d";
    c.inputs = {random_tensor<S>({1, 2, 8, 8}, rng, true),
                random_tensor<S>({3, 2, 4, 4}, rng, true),
                random_tensor<S>({3}, rng, true)};
    c.build = [](std::vector<TensorT<S>>& in) {
      return readout(conv2d(in[0], in[1], in[2], 2, 1));
    };
    cases.push_back(std::move(c));
  }
  {
    OpCase<S> c;
    c.name = "conv_transpose2d";
    c.inputs = {random_tensor<S>({1, 3, 4, 4}, rng, true),
                random_tensor<S>({3, 2, 4, 4}, rng, true),
                random_tensor<S>({2}, rng, true)};
    c.build = [](std::vector<TensorT<S>>& in) {
      return readout(conv_transpose2d(in[0], in[1], in[2], 2, 1));
    };
    cases.push_back(std::move(c));
  }
  {
    OpCase<S> c;
    c.name = "instance_norm";
    c.inputs = {random_tensor<S>({1, 2, 8, 8}, rng, true, -2.0, 2.0),
                random_tensor<S>({2}, rng, true, 0.5, 1.5),
                random_tensor<S>({2}, rng, true, -0.5, 0.5)};
    c.build = [](std::vector<TensorT<S>>& in) {
      return readout(instance_norm(in[0], in[1], in[2]));
    };
    cases.push_back(std::move(c));
  }
  for (auto [kind, name] :
       {std::pair{Activation::relu, "relu"},
        {Activation::leaky_relu, "leaky_relu"},
        {Activation::tanh, "tanh"},
        {Activation::sigmoid, "sigmoid"}}) {
    OpCase<S> c;
    c.name = name;
    // keep samples away from the relu kink where the derivative jumps
    auto t = random_tensor<S>({1, 2, 8, 8}, rng, true, -1.5, 1.5);
    for (auto& v : t.values())
      if (std::fabs(double(v)) < 0.05) v = S(0.1);
    c.inputs = {t};
    const Activation k = kind;
    c.build = [k](std::vector<TensorT<S>>& in) {
      return readout(activation(in[0], k));
    };
    cases.push_back(std::move(c));
  }
  {
    OpCase<S> c;
    c.name = "concat_channels";
    c.inputs = {random_tensor<S>({1, 2, 8, 8}, rng, true),
                random_tensor<S>({1, 3, 8, 8}, rng, true)};
    c.build = [](std::vector<TensorT<S>>& in) {
      return readout(concat_channels(in[0], in[1]));
    };
    cases.push_back(std::move(c));
  }
  for (auto [kind, name] : {std::pair{LossKind::l1, "l1"},
                            {LossKind::mse, "mse"},
                            {LossKind::bce_logits, "bce_logits"}}) {
    OpCase<S> c;
    c.name = name;
    auto pred = random_tensor<S>({1, 1, 8, 8}, rng, true, -2.0, 2.0);
    if (kind == LossKind::l1) // keep away from the |x| kink
      for (auto& v : pred.values())
        if (std::fabs(double(v) - 0.3) < 0.05) v = S(0.5);
    c.inputs = {pred};
    const LossKind k = kind;
    c.build = [k](std::vector<TensorT<S>>& in) {
      auto target = TensorT<S>::filled(in[0].shape(), S(0.3));
      if (k == LossKind::bce_logits)
        target = TensorT<S>::filled(in[0].shape(), S(1));
      return loss(in[0], target, k);
    };
    cases.push_back(std::move(c));
  }
  {
    OpCase<S> c;
    c.name = "add+scale";
    c.inputs = {random_tensor<S>({1, 1, 8, 8}, rng, true),
                random_tensor<S>({1, 1, 8, 8}, rng, true)};
    c.build = [](std::vector<TensorT<S>>& in) {
      return readout(add(in[0], scale(in[1], S(1.5))));
    };
    cases.push_back(std::move(c));
  }
  return cases;
}

template <class S>
TensorT<S> unet_block(std::vector<TensorT<S>>& in) {
  // one encoder stage, one decoder stage, skip concat: the full recipe in
  // miniature at 8x8
  auto enc = activation(conv2d(in[0], in[1], in[2], 2, 1),
                        Activation::leaky_relu);
  auto norm = instance_norm(enc, in[3], in[4]);
  auto dec = activation(conv_transpose2d(norm, in[5], in[6], 2, 1),
                        Activation::relu);
  auto cat = concat_channels(dec, in[0]);
  auto out = activation(conv2d(cat, in[7], in[8], 1, 1), Activation::tanh);
  return readout(out);
}

template <class S>
std::vector<TensorT<S>> unet_block_inputs(uint64_t seed) {
  Rng rng(seed);
  return {
      random_tensor<S>({1, 2, 8, 8}, rng, true),  // x
      random_tensor<S>({4, 2, 4, 4}, rng, true, -0.3, 0.3),  // enc w
      random_tensor<S>({4}, rng, true, -0.1, 0.1),           // enc b
      random_tensor<S>({4}, rng, true, 0.8, 1.2),            // gamma
      random_tensor<S>({4}, rng, true, -0.2, 0.2),           // beta
      random_tensor<S>({4, 3, 4, 4}, rng, true, -0.3, 0.3),  // dec w
      random_tensor<S>({3}, rng, true, -0.1, 0.1),           // dec b
      random_tensor<S>({2, 5, 3, 3}, rng, true, -0.3, 0.3),  // head w
      random_tensor<S>({2}, rng, true, -0.1, 0.1),           // head b
  };
}

} // namespace

TEST_CASE("gradcheck: all ops pass at 8x8 in 32-bit (tol 1e-2)") {
  for (auto& c : op_cases<float>(77)) {
    auto report = grad_check<float>(c.build, c.inputs, 1e-3, 1e-2);
    INFO(c.name << ": max rel error " << report.max_rel_error << " over "
                << report.checked << " elements");
    CHECK(report.pass);
  }
}

TEST_CASE("gradcheck: all ops pass at 8x8 in 64-bit (tol 1e-5)") {
  for (auto& c : op_cases<double>(78)) {
    auto report = grad_check<double>(c.build, c.inputs, 1e-4, 1e-5);
    INFO(c.name << ": max rel error " << report.max_rel_error << " over "
                << report.checked << " elements");
    CHECK(report.pass);
  }
}

TEST_CASE("gradcheck: full U-Net block at 8x8 in both precisions") {
  auto inputs32 = unet_block_inputs<float>(79);
  auto r32 = grad_check<float>(unet_block<float>, inputs32, 1e-3, 1e-2);
  INFO("f32 max rel error " << r32.max_rel_error);
  CHECK(r32.pass);

  auto inputs64 = unet_block_inputs<double>(79);
  auto r64 = grad_check<double>(unet_block<double>, inputs64, 1e-4, 1e-5);
  INFO("f64 max rel error " << r64.max_rel_error);
  CHECK(r64.pass);
}

TEST_CASE("gradcheck: corrupted backward rule fails (negative control)") {
  Rng rng(80);
  std::vector<TensorT<double>> inputs{random_tensor<double>({8}, rng, true)};
  auto build = [](std::vector<TensorT<double>>& in) {
    // deliberately wrong gradient: forward computes mean(x^2) but we bolt on
    // a backward that doubles the true gradient
    auto correct = loss(in[0], TensorT<double>::zeros({8}), LossKind::mse);
    auto broken = correct.node();
    auto input_node = in[0].node();
    broken->backward_fn = [broken, input_node]() {
      input_node->ensure_grad();
      for (size_t i = 0; i < input_node->grad.size(); ++i)
        input_node->grad[i] += broken->grad[0] * 4.0 *
                               input_node->value[i] / 8.0; // 2x too big
    };
    return correct;
  };
  auto report = grad_check<double>(build, inputs, 1e-4, 1e-5);
  CHECK_FALSE(report.pass);
  CHECK(report.max_rel_error > 1e-2);
}
