// SPDX-License-Identifier: Apache-2.0
#include "vp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "vp/errors.hpp"
#include "vp/optim.hpp"
#include "vp/ops.hpp"
#include "vp/random.hpp"

namespace vp {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("training: batch_size must be >= 1");
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("training: lr must be positive");
  if (!(lr_min >= 0) || lr_min > lr) throw ConfigError("training: need 0 <= lr_min <= lr");
  if (!(lambda_g >= 0) || !std::isfinite(lambda_g)) throw ConfigError("training: lambda_g must be >= 0");
}

namespace {

void dump_failure(const FitOptions& options, const Checkpoint& last_good) {
  if (options.failure_dump.empty()) return;
  save_checkpoint(options.failure_dump, last_good);
}

}  // namespace

FitResult fit(PredictorModel& model, const VideoDataset& train, const VideoDataset& val, const TrainConfig& config,
              const FitOptions& options) {
  config.validate();
  const std::size_t delta = model.config().delta;

  OptimState state;
  std::uint32_t start_epoch = 0;
  if (options.resume != nullptr) {
    restore_parameters(model, *options.resume);
    state = options.resume->optim;
    start_epoch = options.resume->epoch;
    if (state.total_epochs != config.epochs) {
      throw ConfigError("resume: checkpoint schedule spans " + std::to_string(state.total_epochs) +
                        " epochs, config asks for " + std::to_string(config.epochs));
    }
  } else {
    state.lr_max = config.lr;
    state.lr_min = config.lr_min;
    state.total_epochs = config.epochs;
  }

  const LossConfig loss_config{config.lambda_g};
  const std::vector<Sample> samples = train.next_frame_samples();
  if (config.epochs > start_epoch && samples.empty()) throw ConfigError("training set has no next-frame samples");
  const std::uint32_t end_epoch =
      options.stop_after == 0 ? config.epochs : std::min(config.epochs, options.stop_after);

  FitResult result;
  for (std::uint32_t epoch = start_epoch; epoch < end_epoch; ++epoch) {
    const Checkpoint epoch_start = capture_checkpoint(model, state, epoch, config.seed, options.config_text);
    const real lr = cosine_anneal_lr(epoch, state);

    std::vector<Sample> order = samples;
    Rng shuffle_rng(derive_seed(config.seed, "shuffle/" + std::to_string(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const real inv_batch = real(1) / static_cast<real>(end - begin);
      model.zero_grad();
      for (std::size_t i = begin; i < end; ++i) {
        const Tensor pred = model.predict_next(train.window(order[i], delta));
        const Tensor loss = total_loss(pred, train.target(order[i]), loss_config);
        if (!std::isfinite(loss.item())) {
          dump_failure(options, epoch_start);
          throw NumericError("non-finite training loss in epoch " + std::to_string(epoch + 1) + " at sample (" +
                             std::to_string(order[i].sequence) + ", " + std::to_string(order[i].target) + ")");
        }
        loss_sum += static_cast<double>(loss.item());
        scale(loss, inv_batch).backward();
      }
      try {
        adam_step(model.parameters(), state, lr);
      } catch (const NumericError&) {
        dump_failure(options, epoch_start);
        throw;
      }
    }
    model.zero_grad();

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.lr = static_cast<double>(lr);
    m.train_loss = loss_sum / static_cast<double>(order.size());
    if (val.size() > 0) {
      const FrameMetrics v = evaluate_next_frame(model, val);
      m.val_psnr = v.psnr;
      m.val_ssim = v.ssim;
    }
    result.log.push_back(m);
    if (options.on_epoch) options.on_epoch(m);
  }

  const std::uint32_t done = std::max(start_epoch, end_epoch);
  result.checkpoint = capture_checkpoint(model, state, done, config.seed, options.config_text);
  return result;
}

namespace {

template <typename Predict>
FrameMetrics mean_over_samples(const VideoDataset& data, Predict predict) {
  MetricReport report;
  for (const Sample& s : data.next_frame_samples()) report.frames.push_back(frame_metrics(predict(s), data.target(s)));
  return report.mean();
}

}  // namespace

FrameMetrics evaluate_next_frame(const PredictorModel& model, const VideoDataset& data) {
  NoGradGuard guard;
  const std::size_t delta = model.config().delta;
  return mean_over_samples(data, [&](const Sample& s) { return model.predict_next(data.window(s, delta)); });
}

FrameMetrics evaluate_copy_last(const VideoDataset& data) {
  return mean_over_samples(data, [&](const Sample& s) { return data.sequences[s.sequence][s.target - 1]; });
}

std::vector<SequenceEval> evaluate_sequences(const PredictorModel* model, const VideoDataset& data, bool self_eval) {
  NoGradGuard guard;
  std::vector<SequenceEval> out;
  for (std::size_t q = 0; q < data.size(); ++q) {
    VideoDataset single;
    single.sequences.push_back(data.sequences[q]);
    SequenceEval e;
    e.sequence = q;
    e.samples = single.next_frame_samples().size();
    if (e.samples == 0) {
      out.push_back(e);
      continue;
    }
    e.copy_last = evaluate_copy_last(single);
    if (self_eval) {
      e.model = mean_over_samples(single, [&](const Sample& s) { return single.target(s); });
    } else if (model != nullptr) {
      e.model = evaluate_next_frame(*model, single);
    }
    out.push_back(e);
  }
  return out;
}

void write_metric_log(const std::filesystem::path& path, const std::vector<EpochMetrics>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot create " + path.string());
  out << "epoch,lr,train_loss,val_psnr,val_ssim\n" << std::setprecision(17);
  for (const auto& m : log) {
    out << m.epoch << ',' << m.lr << ',' << m.train_loss << ',' << m.val_psnr << ',' << m.val_ssim << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace vp
