#include <gtest/gtest.h>

#include <fstream>

#include "artgest/nn/checkpoint.hpp"
#include "artgest/nn/two_stream.hpp"
#include "support/synthetic.hpp"

using namespace artgest;
using namespace artgest::nn;
using testsupport::make_temp_dir;

namespace {

BackboneSpec tiny(int64_t dim = 32) {
  return BackboneSpec{BackboneFamily::tiny_test, false, dim};
}

Tensor images(int64_t n, int64_t size, uint64_t seed = 3) {
  Rng rng(seed);
  return Tensor::randn({n, 3, size, size}, rng, 1.0f);
}

double grad_norm_of_prefix(Module& m, const std::string& prefix) {
  double acc = 0.0;
  for (auto& [name, p] : m.named_parameters())
    if (name.rfind(prefix, 0) == 0 && !p->grad.empty()) acc += p->grad.norm() * p->grad.norm();
  return std::sqrt(acc);
}

std::vector<int64_t> shape_of_param(Module& m, const std::string& name) {
  for (auto& [n, p] : m.named_parameters())
    if (n == name) return p->value.shape();
  return {};
}

}  // namespace

TEST(BuildModel, TinyHeadLayerWidths) {
  Rng rng(1);
  FusionHeadConfig head;
  head.hidden_dims = {64, 64, 32};
  auto model = build_model(tiny(), tiny(), head, 6, rng);
  // 64 -> 64 -> 64 -> 32 -> 6
  EXPECT_EQ(shape_of_param(*model, "head.fc1.weight"), (Shape{64, 64}));
  EXPECT_EQ(shape_of_param(*model, "head.fc2.weight"), (Shape{64, 64}));
  EXPECT_EQ(shape_of_param(*model, "head.fc3.weight"), (Shape{64, 32}));
  EXPECT_EQ(shape_of_param(*model, "head.fc4.weight"), (Shape{32, 6}));
  EXPECT_EQ(model->head()->in_dim(), 64);
}

TEST(BuildModel, ParameterCountIsAdditive) {
  Rng rng(2);
  auto model = build_model(tiny(), tiny(16), {}, 6, rng);
  Rng r2(3);
  auto crop_alone = build_backbone(tiny(), r2);
  auto ctx_alone = build_backbone(tiny(16), r2);
  FusionHead head_alone(32 + 16, {}, 6, r2);
  EXPECT_EQ(model->parameter_count(), crop_alone->parameter_count() +
                                          ctx_alone->parameter_count() +
                                          head_alone.parameter_count());
}

TEST(BuildModel, BackbonesDoNotShareWeights) {
  Rng rng(4);
  auto model = build_model(tiny(), tiny(), {}, 6, rng);
  // same family and width, but independently initialized parameters
  auto params = model->named_parameters();
  const Tensor *crop_w = nullptr, *ctx_w = nullptr;
  for (auto& [name, p] : params) {
    if (name == "crop_backbone.stage1.conv.weight") crop_w = &p->value;
    if (name == "context_backbone.stage1.conv.weight") ctx_w = &p->value;
  }
  ASSERT_NE(crop_w, nullptr);
  ASSERT_NE(ctx_w, nullptr);
  bool any_diff = false;
  for (int64_t i = 0; i < crop_w->numel(); ++i) any_diff |= ((*crop_w)[i] != (*ctx_w)[i]);
  EXPECT_TRUE(any_diff);
}

TEST(BuildModel, InvalidConfigsThrow) {
  Rng rng(5);
  FusionHeadConfig two_layers;
  two_layers.hidden_dims = {64, 64};
  EXPECT_THROW(build_model(tiny(), tiny(), two_layers, 6, rng), Error);
  EXPECT_THROW(build_model(tiny(), tiny(), {}, 1, rng), Error);
  FusionHeadConfig bad_dropout;
  bad_dropout.dropout = 1.0;
  EXPECT_THROW(build_model(tiny(), tiny(), bad_dropout, 6, rng), Error);
}

TEST(BuildModel, UnknownBackboneNameThrows) {
  try {
    backbone_family_from_string("resnet18");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownBackbone);
  }
}

TEST(BuildModel, PretrainedWithoutWeightsThrows) {
  Rng rng(6);
  BackboneSpec spec = tiny();
  spec.pretrained = true;
  try {
    build_backbone(spec, rng, make_temp_dir("noweights"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PretrainedWeightsUnavailable);
  }
}

TEST(BuildModel, PretrainedWeightsRoundTrip) {
  Rng rng(7);
  auto source = build_backbone(tiny(), rng);
  auto dir = make_temp_dir("weights");
  archive::save(dir / "tiny_test.agw", json{{"kind", "weights"}}, source->named_state());

  BackboneSpec spec = tiny();
  spec.pretrained = true;
  Rng rng2(999);  // different init, must be overwritten
  auto loaded = build_backbone(spec, rng2, dir);
  auto a = source->named_state();
  auto b = loaded->named_state();
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i)
    for (int64_t k = 0; k < a[i].second.numel(); ++k)
      ASSERT_EQ(a[i].second[k], b[i].second[k]) << a[i].first;
  std::filesystem::remove_all(dir);
}

TEST(ResNet50, PooledWidthIs2048AndHeadInputIs4096) {
  Rng rng(8);
  BackboneSpec spec{BackboneFamily::resnet50, false, 0};
  auto backbone = build_backbone(spec, rng);
  EXPECT_EQ(backbone->feature_dim(), 2048);

  backbone->set_training(false);
  NoGradGuard no_grad;
  Var out = backbone->forward(make_leaf(images(1, 64)));
  EXPECT_EQ(out->value.shape(), (Shape{1, 2048}));

  // two-stream head input = 2048 + 2048, confirmed via the built model
  Rng rng2(9);
  auto model = build_model(spec, spec, {}, 6, rng2);
  EXPECT_EQ(model->head()->in_dim(), 4096);
}

TEST(ResNet50, ParameterCountMatchesReference) {
  // canonical bottleneck ResNet-50 without the classification fc
  Rng rng(10);
  auto backbone = build_backbone({BackboneFamily::resnet50, false, 0}, rng);
  EXPECT_EQ(backbone->parameter_count(), 23508032);
}

TEST(Model, BranchIsolationBitwise) {
  Rng rng(11);
  auto model = build_model(tiny(), tiny(), {}, 6, rng);
  model->set_training(false);
  NoGradGuard no_grad;

  Tensor crop = images(3, 16, 1);
  Tensor ctx_a = images(3, 16, 2);
  Tensor ctx_zero = Tensor::zeros({3, 3, 16, 16});

  Var fp_a = model->extract_person_features(make_leaf(crop));
  Var fp_b = model->extract_person_features(make_leaf(crop));
  Var fc_a = model->extract_context_features(make_leaf(ctx_a));
  Var fc_b = model->extract_context_features(make_leaf(ctx_zero));

  for (int64_t i = 0; i < fp_a->value.numel(); ++i)
    ASSERT_EQ(fp_a->value[i], fp_b->value[i]);  // crop path ignores context entirely
  bool ctx_changed = false;
  for (int64_t i = 0; i < fc_a->value.numel(); ++i)
    ctx_changed |= (fc_a->value[i] != fc_b->value[i]);
  EXPECT_TRUE(ctx_changed);
}

TEST(Model, BatchPermutationEquivariance) {
  Rng rng(12);
  auto model = build_model(tiny(), tiny(), {}, 4, rng);
  model->set_training(false);
  NoGradGuard no_grad;

  Tensor crop = images(4, 16, 5), ctx = images(4, 16, 6);
  Var base = model->forward(make_leaf(crop), make_leaf(ctx));

  const std::vector<int64_t> perm = {2, 0, 3, 1};
  Tensor pcrop({4, 3, 16, 16}), pctx({4, 3, 16, 16});
  const int64_t stride = 3 * 16 * 16;
  for (int64_t i = 0; i < 4; ++i) {
    std::copy_n(crop.data() + perm[i] * stride, stride, pcrop.data() + i * stride);
    std::copy_n(ctx.data() + perm[i] * stride, stride, pctx.data() + i * stride);
  }
  Var permuted = model->forward(make_leaf(pcrop), make_leaf(pctx));
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t c = 0; c < 4; ++c)
      EXPECT_NEAR(permuted->value.at(i, c), base->value.at(perm[i], c), 1e-4);
}

TEST(Model, ZeroHeadOutputsFinalBias) {
  Rng rng(13);
  auto model = build_model(tiny(8), tiny(8), {}, 6, rng);
  model->set_training(false);
  NoGradGuard no_grad;
  for (auto& [name, p] : model->named_parameters())
    if (name.rfind("head.", 0) == 0) p->value.fill(0.0f);
  // plant a recognizable bias on the output layer
  for (auto& [name, p] : model->named_parameters())
    if (name == "head.fc4.bias")
      for (int64_t c = 0; c < 6; ++c) p->value[c] = static_cast<float>(c) * 0.5f;

  Var f_person = make_leaf(Tensor::zeros({2, 8}));
  Var f_context = make_leaf(Tensor::zeros({2, 8}));
  Var logits = model->fuse_and_classify(f_person, f_context);
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t c = 0; c < 6; ++c)
      EXPECT_FLOAT_EQ(logits->value.at(i, c), static_cast<float>(c) * 0.5f);
}

TEST(Model, ConcatOrderIsSensitive) {
  Rng rng(14);
  auto model = build_model(tiny(16), tiny(16), {}, 6, rng);
  model->set_training(false);
  NoGradGuard no_grad;
  Rng frng(15);
  Tensor fa = Tensor::randn({2, 16}, frng), fb = Tensor::randn({2, 16}, frng);
  Var ab = model->fuse_and_classify(make_leaf(fa), make_leaf(fb));
  Var ba = model->fuse_and_classify(make_leaf(fb), make_leaf(fa));
  bool differs = false;
  for (int64_t i = 0; i < ab->value.numel(); ++i)
    differs |= std::abs(ab->value[i] - ba->value[i]) > 1e-6;
  EXPECT_TRUE(differs);
}

TEST(Model, FeatureWidthMismatchThrows) {
  Rng rng(16);
  auto model = build_model(tiny(16), tiny(8), {}, 6, rng);
  model->set_training(false);
  NoGradGuard no_grad;
  EXPECT_THROW(model->fuse_and_classify(make_leaf(Tensor::zeros({2, 8})),
                                        make_leaf(Tensor::zeros({2, 8}))),
               Error);
  EXPECT_THROW(model->extract_features(make_leaf(images(2, 16)), make_leaf(images(3, 16))),
               Error);
}

TEST(Model, EvalForwardIsDeterministicAndFinite) {
  Rng rng(17);
  auto model = build_model(tiny(), tiny(), {}, 6, rng);
  model->set_training(false);
  NoGradGuard no_grad;
  Tensor crop = images(2, 16, 7), ctx = images(2, 16, 8);
  Var a = model->forward(make_leaf(crop), make_leaf(ctx));
  Var b = model->forward(make_leaf(crop), make_leaf(ctx));
  for (int64_t i = 0; i < a->value.numel(); ++i) {
    ASSERT_EQ(a->value[i], b->value[i]);
    ASSERT_TRUE(std::isfinite(a->value[i]));
  }
}

TEST(Model, TrainModeDropoutPerturbsLogits) {
  Rng rng(18);
  auto model = build_model(tiny(), tiny(), {}, 6, rng);
  model->set_training(true);
  Tensor crop = images(2, 16, 9), ctx = images(2, 16, 10);
  Rng d1(100), d2(101);
  Var a = model->forward(make_leaf(crop), make_leaf(ctx), &d1);
  Var b = model->forward(make_leaf(crop), make_leaf(ctx), &d2);
  bool differs = false;
  for (int64_t i = 0; i < a->value.numel(); ++i) differs |= (a->value[i] != b->value[i]);
  EXPECT_TRUE(differs);
}

TEST(Model, GradientsReachEveryGroupAndBothInputs) {
  Rng rng(19);
  auto model = build_model(tiny(), tiny(), {}, 6, rng);
  model->set_training(true);
  Rng drop(42);

  Var crop = make_leaf(images(4, 16, 11), /*requires_grad=*/true);
  Var ctx = make_leaf(images(4, 16, 12), /*requires_grad=*/true);
  Var logits = model->forward(crop, ctx, &drop);
  Var loss = ops::weighted_cross_entropy(logits, {0, 1, 2, 3}, Tensor::ones({6}), 0.0f);
  backward(loss);

  EXPECT_GT(grad_norm_of_prefix(*model, "crop_backbone."), 0.0);
  EXPECT_GT(grad_norm_of_prefix(*model, "context_backbone."), 0.0);
  EXPECT_GT(grad_norm_of_prefix(*model, "head.fc1."), 0.0);
  EXPECT_GT(grad_norm_of_prefix(*model, "head.fc2."), 0.0);
  EXPECT_GT(grad_norm_of_prefix(*model, "head.fc3."), 0.0);
  EXPECT_GT(grad_norm_of_prefix(*model, "head.fc4."), 0.0);
  ASSERT_FALSE(crop->grad.empty());
  ASSERT_FALSE(ctx->grad.empty());
  EXPECT_GT(crop->grad.norm(), 0.0);
  EXPECT_GT(ctx->grad.norm(), 0.0);
  EXPECT_TRUE(crop->grad.all_finite());
  EXPECT_TRUE(ctx->grad.all_finite());
}

TEST(Model, HeadWidthInvariantOverFuzzedConfigs) {
  Rng rng(20);
  for (int trial = 0; trial < 8; ++trial) {
    const int64_t d1 = rng.uniform_int(4, 48);
    const int64_t d2 = rng.uniform_int(4, 48);
    const int C = static_cast<int>(rng.uniform_int(2, 9));
    FusionHeadConfig head;
    head.hidden_dims = {rng.uniform_int(4, 32), rng.uniform_int(4, 32), rng.uniform_int(4, 32)};
    auto model = build_model(tiny(d1), tiny(d2), head, C, rng);
    model->set_training(false);
    NoGradGuard no_grad;
    Var logits = model->forward(make_leaf(images(2, 16, 30 + trial)),
                                make_leaf(images(2, 16, 60 + trial)));
    EXPECT_EQ(logits->value.shape(), (Shape{2, C}));
    EXPECT_TRUE(logits->value.all_finite());
  }
}

TEST(Model, WithoutContextVariantHasNoContextBranch) {
  Rng rng(21);
  auto model = build_model(tiny(), tiny(), {}, 6, rng, Variant::without_context);
  EXPECT_EQ(model->context_backbone(), nullptr);
  EXPECT_EQ(model->head()->in_dim(), 32);
  model->set_training(false);
  NoGradGuard no_grad;
  Var logits = model->forward(make_leaf(images(2, 16)), nullptr);
  EXPECT_EQ(logits->value.shape(), (Shape{2, 6}));
  EXPECT_THROW(model->extract_context_features(make_leaf(images(2, 16))), Error);
  // params shrink accordingly
  Rng rng2(22);
  auto full = build_model(tiny(), tiny(), {}, 6, rng2);
  EXPECT_LT(model->parameter_count(), full->parameter_count());
}

TEST(Checkpoint, RoundTripIsBitwiseAndFunctional) {
  Rng rng(23);
  auto model = build_model(tiny(), tiny(16), {}, 5, rng);
  model->set_training(false);
  auto labels = data::LabelMap::from_names({"a", "b", "c", "d", "e"});
  data::PreprocessConfig pre;
  pre.crop_size = 16;
  pre.context_size = 16;

  auto dir = make_temp_dir("ckpt");
  const auto path = dir / "model.agck";
  save_checkpoint(*model, labels, pre, path);
  auto loaded = load_checkpoint(path);

  EXPECT_TRUE(loaded.labels == labels);
  EXPECT_TRUE(loaded.preprocess == pre);
  EXPECT_EQ(loaded.model->variant(), Variant::with_context);
  EXPECT_EQ(loaded.model->num_classes(), 5);

  auto a = model->named_state();
  auto b = loaded.model->named_state();
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].first, b[i].first);
    for (int64_t k = 0; k < a[i].second.numel(); ++k)
      ASSERT_EQ(a[i].second[k], b[i].second[k]) << a[i].first;
  }

  NoGradGuard no_grad;
  Tensor crop = images(2, 16, 40), ctx = images(2, 16, 41);
  Var y1 = model->forward(make_leaf(crop), make_leaf(ctx));
  Var y2 = loaded.model->forward(make_leaf(crop), make_leaf(ctx));
  for (int64_t i = 0; i < y1->value.numel(); ++i) ASSERT_EQ(y1->value[i], y2->value[i]);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, WrongVersionTagThrowsVersionMismatch) {
  auto dir = make_temp_dir("ver");
  const auto path = dir / "bad.agck";
  {
    std::ofstream out(path, std::ios::binary);
    out.write(archive::kMagic, sizeof(archive::kMagic));
    const std::string header = R"({"format_version":999,"meta":{},"tensors":[]})";
    const uint64_t len = header.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header.data(), static_cast<std::streamsize>(len));
  }
  try {
    load_checkpoint(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::VersionMismatch);
  }
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, TruncatedFileThrowsCorrupt) {
  Rng rng(24);
  auto model = build_model(tiny(8), tiny(8), {}, 2, rng);
  auto labels = data::LabelMap::from_names({"a", "b"});
  auto dir = make_temp_dir("trunc");
  const auto path = dir / "model.agck";
  save_checkpoint(*model, labels, {}, path);

  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  try {
    load_checkpoint(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorruptCheckpoint);
  }
  std::filesystem::remove_all(dir);
}

TEST(Backbones, HrnetForwardShapeAndWidth) {
  Rng rng(25);
  auto hrnet = build_backbone({BackboneFamily::hrnet_w32, false, 0}, rng);
  EXPECT_EQ(hrnet->feature_dim(), 2048);
  hrnet->set_training(false);
  NoGradGuard no_grad;
  Var out = hrnet->forward(make_leaf(images(1, 64)));
  EXPECT_EQ(out->value.shape(), (Shape{1, 2048}));
  EXPECT_TRUE(out->value.all_finite());
}

TEST(Backbones, SwinForwardShapeWidthAndGradients) {
  Rng rng(26);
  auto swin = build_backbone({BackboneFamily::swin_v2, false, 0}, rng);
  EXPECT_EQ(swin->feature_dim(), 768);
  swin->set_training(false);
  {
    NoGradGuard no_grad;
    Var out = swin->forward(make_leaf(images(1, 32)));
    EXPECT_EQ(out->value.shape(), (Shape{1, 768}));
    EXPECT_TRUE(out->value.all_finite());
  }
  // 64px input: grid 16 at stage 0, so window 8 with shift 4 is exercised
  swin->set_training(true);
  Var in = make_leaf(images(1, 64, 50), true);
  Var out = swin->forward(in);
  backward(ops::sum_all(out));
  EXPECT_GT(in->grad.norm(), 0.0);
  EXPECT_TRUE(in->grad.all_finite());
  EXPECT_GT(grad_norm_of_prefix(*swin, "stage0.block1.attn."), 0.0);
}
