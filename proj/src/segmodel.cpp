// Copyright 2026 The fgsty Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fgsty/segmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "fgsty/rng.hpp"

namespace fgsty {
namespace {

constexpr char kMagic[8] = {'F', 'G', 'S', 'T', 'Y', 'C', 'K', '1'};
constexpr int kCheckpointVersion = 1;

nlohmann::json spec_json(const UNetSpec& s) {
  return {{"kind", "unet"},
          {"widths", s.widths},
          {"in_channels", s.in_channels},
          {"leak", s.leak},
          {"levels", s.levels()}};
}

UNetSpec spec_from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "unet") throw Error("checkpoint: unknown architecture");
  UNetSpec s;
  s.widths = j.at("widths").get<std::vector<int>>();
  s.in_channels = j.at("in_channels").get<int>();
  s.leak = j.at("leak").get<double>();
  return s;
}

}  // namespace

SegModel::SegModel(const UNetSpec& spec, std::uint64_t init_seed) : net_(spec) {
  Rng rng = seeded_rng(init_seed).substream("segmodel-init");
  net_.init(rng);
}

Tensor<float> images_to_tensor(std::span<const Image* const> images) {
  if (images.empty()) throw Error("images_to_tensor: empty batch");
  const int h = images[0]->height, w = images[0]->width;
  Tensor<float> x(Image::kChannels, static_cast<int>(images.size()), h, w);
  const std::size_t plane = x.plane();
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = *images[n];
    require_same_size(img, *images[0], "images_to_tensor");
    for (int c = 0; c < Image::kChannels; ++c) {
      float* dst = x.row(c) + n * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        dst[i] = img.data[i * 3 + static_cast<std::size_t>(c)] - 0.5f;
      }
    }
  }
  return x;
}

ProbMap logits_to_prob(const Tensor<float>& logits, int index) {
  ProbMap p(logits.height, logits.width);
  const float* z = logits.row(0) + static_cast<std::size_t>(index) * logits.plane();
  for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] = nn::sigmoid(z[i]);
  return p;
}

std::vector<ProbMap> SegModel::predict_batch(
    std::span<const Image* const> images) const {
  std::vector<ProbMap> out;
  if (images.empty()) return out;
  const Tensor<float> logits = net_.infer(images_to_tensor(images));
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back(logits_to_prob(logits, static_cast<int>(i)));
  }
  return out;
}

ProbMap SegModel::predict(const Image& image) const {
  const Image* one[] = {&image};
  return std::move(predict_batch(one).front());
}

Predictor SegModel::predictor() const {
  return [this](const Image& img) { return predict(img); };
}

OptimState make_optimizer(const SegModel& model, double learning_rate) {
  return OptimState(model.params().size(), learning_rate);
}

double bce_loss(const ProbMap& pred, const BinaryMask& target,
                const BinaryMask* pixel_mask) {
  require_same_size(pred, target, "bce_loss");
  if (pixel_mask != nullptr) require_same_size(pred, *pixel_mask, "bce_loss");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    if (pixel_mask != nullptr && !pixel_mask->data[i]) continue;
    const double p = std::clamp(static_cast<double>(pred.data[i]),
                                nn::kProbClamp, 1.0 - nn::kProbClamp);
    const double y = target.data[i] ? 1.0 : 0.0;
    sum += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

BinaryMask threshold_predict(const SegModel& model, const Image& image,
                             double t) {
  if (!(t > 0.0 && t < 1.0)) throw Error("threshold_predict: t must be in (0,1)");
  return threshold_map(model.predict(image), t);
}

Tensor<float> forward_batch(SegModel& model,
                            std::span<const Image* const> images) {
  return model.net().forward(images_to_tensor(images));
}

double backward_weighted(SegModel& model, const Tensor<float>& logits,
                         const WeightedBatch& batch,
                         const Tensor<float>* extra_feature_grad) {
  const std::size_t plane = logits.plane();
  std::vector<float> targets(logits.size());
  std::vector<float> weights(logits.size());
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const BinaryMask& t = batch.targets[n];
    if (t.pixel_count() != plane) {
      throw DimensionMismatch("backward_weighted: target size mismatch");
    }
    const float w = static_cast<float>(batch.weights[n] / static_cast<double>(plane));
    for (std::size_t i = 0; i < plane; ++i) {
      targets[n * plane + i] = t.data[i] ? 1.0f : 0.0f;
      weights[n * plane + i] = w;
    }
  }
  Tensor<float> dlogits;
  const double loss = nn::weighted_bce(logits, targets, weights, &dlogits);
  if (!std::isfinite(loss)) {
    throw TrainingDiverged("non-finite segmentation loss");
  }
  model.net().backward(dlogits, extra_feature_grad);
  return loss;
}

double weighted_loss_and_grad(SegModel& model, const WeightedBatch& batch) {
  const Tensor<float> logits = forward_batch(model, batch.images);
  return backward_weighted(model, logits, batch);
}

double train_step(SegModel& model, std::span<const LabeledPair> batch,
                  OptimState& opt) {
  if (batch.empty()) throw Error("train_step: empty batch");
  WeightedBatch wb;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const auto& [img, mask] : batch) wb.add(img, *mask, w);
  model.net().zero_grad();
  const double loss = weighted_loss_and_grad(model, wb);
  for (float g : model.net().grads()) {
    if (!std::isfinite(g)) throw TrainingDiverged("non-finite gradient");
  }
  nn::adam_update<float>(model.params(), model.net().grads(), opt);
  return loss;
}

double train_epoch(SegModel& model, std::span<const LabeledPair> data,
                   int batch_size, OptimState& opt, Rng& rng) {
  if (data.empty()) throw Error("train_epoch: no training data");
  if (batch_size <= 0) throw Error("train_epoch: batch_size must be positive");
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  double total = 0.0;
  int steps = 0;
  std::vector<LabeledPair> batch;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    batch.clear();
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
    total += train_step(model, batch, opt);
    ++steps;
  }
  return total / steps;
}

void save_checkpoint(const SegModel& model, const std::filesystem::path& path) {
  nlohmann::json header = {{"format_version", kCheckpointVersion},
                           {"architecture", spec_json(model.spec())},
                           {"dtype", "float32"},
                           {"param_count", model.params().size()}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const auto len = static_cast<std::uint32_t>(text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(model.params().data()),
            static_cast<std::streamsize>(model.params().size() * sizeof(float)));
  if (!out) throw Error("short write on checkpoint " + path.string());
}

namespace {

nlohmann::json read_header(std::ifstream& in, const std::filesystem::path& path) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error("not a checkpoint: " + path.string());
  }
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1u << 20)) throw Error("corrupt checkpoint header: " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (!in) throw Error("corrupt checkpoint header: " + path.string());
  nlohmann::json header = nlohmann::json::parse(text);
  if (header.value("format_version", 0) != kCheckpointVersion) {
    throw Error("unsupported checkpoint version: " + path.string());
  }
  return header;
}

}  // namespace

UNetSpec read_checkpoint_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  return spec_from_json(read_header(in, path).at("architecture"));
}

SegModel load_checkpoint(const std::filesystem::path& path,
                         const UNetSpec& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  const nlohmann::json header = read_header(in, path);
  const UNetSpec spec = spec_from_json(header.at("architecture"));
  if (!(spec == expected)) {
    throw Error("checkpoint architecture mismatch: file has " +
                spec_json(spec).dump() + ", expected " +
                spec_json(expected).dump());
  }
  SegModel model(spec, 0);
  const auto count = header.at("param_count").get<std::size_t>();
  if (count != model.params().size()) {
    throw Error("checkpoint parameter count mismatch: " + path.string());
  }
  in.read(reinterpret_cast<char*>(model.params().data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw Error("truncated checkpoint: " + path.string());
  return model;
}

}  // namespace fgsty
