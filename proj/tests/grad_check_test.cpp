#include <cmath>

#include <gtest/gtest.h>

#include "daf/commands.hpp"
#include "daf/error.hpp"
#include "daf/grad_check.hpp"
#include "daf/training.hpp"
#include "test_util.hpp"

namespace daf {
namespace {

TEST(GradCheck, SmoothScalar) {
  Tensor x = Tensor::scalar(0.7);
  const auto report = grad_check([&] { return tanh(x); }, {{"x", x}});
  ASSERT_EQ(report.params.size(), 1u);
  EXPECT_LT(report.params[0].max_rel_error, 1e-8);
  EXPECT_TRUE(report.passed);
}

TEST(GradCheck, ReluKinkIsSkippedNotFailed) {
  Tensor x = Tensor::vector({0.0, 1.0, -1.0});
  const auto report = grad_check([&] { return sum(relu(x)); }, {{"x", x}});
  EXPECT_TRUE(report.passed);
  EXPECT_EQ(report.params[0].skipped_kinks, 1u);
  EXPECT_EQ(report.params[0].checked, 2u);
}

TEST(GradCheck, InjectedFaultNamesTheParameter) {
  Tensor a = Tensor::vector({0.3, -0.2});
  Tensor b = Tensor::vector({0.5, 0.1});
  ScopedGradFault fault("tanh", 1.5);
  const auto report = grad_check([&] { return add(sum(tanh(a)), sum(mul(b, b))); }, {{"a", a}, {"b", b}});
  EXPECT_FALSE(report.passed);
  EXPECT_EQ(report.offenders(), std::vector<std::string>{"a"});
}

TEST(GradCheck, ZeroToleranceFails) {
  Tensor x = Tensor::vector({0.7, -0.4});
  GradCheckOptions opts;
  opts.tolerance = 0.0;
  const auto report = grad_check([&] { return sum(tanh(mul(x, x))); }, {{"x", x}}, opts);
  EXPECT_FALSE(report.passed);
}

TEST(GradCheck, NondeterminismIsAnError) {
  Tensor x = Tensor::scalar(1.0);
  int calls = 0;
  auto f = [&] { return scale(x, 1.0 + 1e-3 * ++calls); };
  EXPECT_THROW(grad_check(f, {{"x", x}}), NumericError);
}

TEST(GradCheck, FullModelTwoSampleBatchAllVariants) {
  for (GateKind gate : {GateKind::kSoftmax3, GateKind::kSigmoid2, GateKind::kStaticConcat}) {
    SCOPED_TRACE(std::string(gate_kind_name(gate)));
    const ModelConfig cfg = testing::tiny_config(gate, 5);
    Model model(cfg);
    testing::randomize(model.params(), 11);
    Rng rng(4);
    const std::vector<Utterance> samples{testing::random_utterance(rng, cfg.dims, 3, 2, "a"),
                                         testing::random_utterance(rng, cfg.dims, 1, 4, "b")};
    const Batch batch = testing::batch_of(samples, cfg.dims);
    const auto report = grad_check(
        [&] { return mse_loss(model.forward(batch, Mode::kEval).prediction, batch.labels); }, model.params().named());
    EXPECT_TRUE(report.passed);
    for (const auto& p : report.params) EXPECT_LT(p.max_rel_error, 1e-4) << p.name;
  }
}

TEST(CmdGradcheck, FaultInjectionFailsAndReports) {
  cli::GradcheckConfig cfg;
  cfg.model = testing::tiny_config(GateKind::kSoftmax3);
  cfg.seeds = {0};
  cfg.lengths = {3};
  cfg.fusions = {GateKind::kSoftmax3};
  cfg.fault_op = "seq_dot";
  const auto out = cli::cmd_gradcheck(cfg);
  EXPECT_FALSE(out.passed);
  EXPECT_NE(out.text.find("FAILED parameters:"), std::string::npos);
  EXPECT_NE(out.text.find("audio.attn.W"), std::string::npos);
}

TEST(CmdGradcheck, ZeroToleranceFails) {
  cli::GradcheckConfig cfg;
  cfg.model = testing::tiny_config(GateKind::kStaticConcat);
  cfg.seeds = {1};
  cfg.lengths = {1};
  cfg.fusions = {GateKind::kStaticConcat};
  cfg.options.tolerance = 0.0;
  EXPECT_FALSE(cli::cmd_gradcheck(cfg).passed);
}

}  // namespace
}  // namespace daf
