// SPDX-License-Identifier: Apache-2.0
#include "vp/commands.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "vp/checkpoint.hpp"
#include "vp/errors.hpp"
#include "vp/gradcheck.hpp"
#include "vp/losses.hpp"
#include "vp/metrics.hpp"
#include "vp/ops.hpp"
#include "vp/random.hpp"
#include "vp/trainer.hpp"

namespace vp {

using json = nlohmann::json;

RuntimeEnv RuntimeEnv::from_environment() {
  RuntimeEnv env;
  if (const char* d = std::getenv("VP_DETERMINISTIC")) env.deterministic = std::string(d) != "0";
  if (const char* t = std::getenv("VP_THREADS")) {
    char* end = nullptr;
    const unsigned long n = std::strtoul(t, &end, 10);
    if (end == t || *end != '\0' || n == 0) throw ConfigError("VP_THREADS must be a positive integer, got '" + std::string(t) + "'");
    env.max_threads = static_cast<unsigned>(n);
  } else {
    env.max_threads = std::max(1u, std::thread::hardware_concurrency());
  }
  return env;
}

RunConfig load_run_config(const std::optional<fs::path>& path) {
  if (!path) {
    RunConfig config;
    config.validate();
    return config;
  }
  return RunConfig::load(*path);
}

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string sequence_dir_name(std::size_t i) {
  std::ostringstream name;
  name << "seq_" << std::setw(5) << std::setfill('0') << i;
  return name.str();
}

struct LoadedModel {
  RunConfig config;
  Checkpoint checkpoint;
  PredictorModel model;
};

LoadedModel load_model(const fs::path& ckpt_path) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  RunConfig config = RunConfig::parse(ck.config_text);
  PredictorModel model(config.model, ck.seed);
  restore_parameters(model, ck);
  return {std::move(config), std::move(ck), std::move(model)};
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset directories

void write_dataset(const fs::path& out, const VideoDataset& data, const RunConfig& config) {
  ensure_dir(out);
  json manifest;
  manifest["format"] = "vp-moving-shapes";
  manifest["version"] = 1;
  manifest["config"] = config.serialize();
  manifest["sequences"] = json::array();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::string name = sequence_dir_name(i);
    save_frames(out / name, data.sequences[i]);
    manifest["sequences"].push_back({{"path", name}, {"frames", data.sequences[i].size()}});
  }
  write_text(out / kManifestName, manifest.dump(2) + "\n");
}

VideoDataset read_dataset(const fs::path& dir, RunConfig* config) {
  const fs::path manifest_path = dir / kManifestName;
  json manifest;
  try {
    manifest = json::parse(read_text(manifest_path));
  } catch (const json::exception& e) {
    throw IoError(manifest_path.string() + ": " + e.what());
  }
  if (!manifest.contains("sequences") || !manifest["sequences"].is_array()) {
    throw IoError(manifest_path.string() + ": missing sequence list");
  }
  VideoDataset data;
  for (const auto& entry : manifest["sequences"]) {
    const std::string rel = entry.at("path").get<std::string>();
    FrameSequence seq = load_frames(dir / rel);
    if (entry.contains("frames") && entry["frames"].get<std::size_t>() != seq.size()) {
      throw IoError(rel + ": manifest lists " + std::to_string(entry["frames"].get<std::size_t>()) +
                    " frames, directory holds " + std::to_string(seq.size()));
    }
    data.sequences.push_back(std::move(seq));
  }
  if (config != nullptr && manifest.contains("config")) *config = RunConfig::parse(manifest["config"].get<std::string>());
  return data;
}

// ---------------------------------------------------------------------------
// gen

void cmd_gen(const GenOptions& options, std::ostream& log) {
  RunConfig config = load_run_config(options.config);
  if (options.sequences) config.data.sequences = *options.sequences;
  if (options.length) config.data.length = *options.length;
  if (options.seed) config.data.scene.seed = *options.seed;
  config.validate();
  const VideoDataset data = generate_dataset(config.scene(), config.data.sequences, config.data.length);
  write_dataset(options.out, data, config);
  log << "wrote " << data.size() << " sequences x " << config.data.length << " frames to " << options.out.string()
      << "\n";
}

// ---------------------------------------------------------------------------
// train

namespace {

/// Header plus the rows of an existing metric log up to `epoch`.
std::string log_prefix(const fs::path& path, std::uint32_t epoch) {
  std::ifstream in(path);
  if (!in) return {};
  std::string line, out;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (static_cast<std::uint32_t>(std::stoul(line.substr(0, comma))) > epoch) break;
    out += line + "\n";
  }
  return out;
}

std::string format_log(const std::vector<EpochMetrics>& log) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (const auto& m : log) {
    out << m.epoch << ',' << m.lr << ',' << m.train_loss << ',' << m.val_psnr << ',' << m.val_ssim << '\n';
  }
  return out.str();
}

}  // namespace

void cmd_train(const TrainOptions& options, std::ostream& log) {
  std::optional<Checkpoint> resume;
  RunConfig config;
  RunConfig data_config;
  const VideoDataset data = read_dataset(options.data, &data_config);
  if (options.resume) {
    resume = load_checkpoint(*options.resume);
    config = RunConfig::parse(resume->config_text);
  } else {
    config = options.config ? RunConfig::load(*options.config) : data_config;
    if (options.seed) config.training.seed = *options.seed;
    if (options.epochs) config.training.epochs = *options.epochs;
    config.validate();
  }
  const auto [train, val] = split_held_out(data, config.eval.held_out);

  ensure_dir(options.out);
  const std::string config_text = config.serialize();
  write_text(options.out / "config.ini", config_text);

  PredictorModel model(config.model, config.training.seed);
  FitOptions fit_options;
  fit_options.config_text = config_text;
  fit_options.failure_dump = options.out / "last_good.ckpt";
  fit_options.stop_after = options.stop_after;
  if (resume) fit_options.resume = &*resume;
  fit_options.on_epoch = [&](const EpochMetrics& m) {
    log << "epoch " << m.epoch << "/" << config.training.epochs << " lr " << m.lr << " loss " << m.train_loss
        << " val_psnr " << m.val_psnr << " val_ssim " << m.val_ssim << "\n";
  };

  const FitResult result = fit(model, train, val, config.training, fit_options);
  save_checkpoint(options.out / "model.ckpt", result.checkpoint);

  const fs::path log_path = options.out / "metrics.csv";
  std::string csv = "epoch,lr,train_loss,val_psnr,val_ssim\n";
  if (resume) csv += log_prefix(options.resume->parent_path() / "metrics.csv", resume->epoch);
  csv += format_log(result.log);
  write_text(log_path, csv);
  log << "checkpoint at epoch " << result.checkpoint.epoch << " written to " << (options.out / "model.ckpt").string()
      << "\n";
}

// ---------------------------------------------------------------------------
// eval

void cmd_eval(const EvalOptions& options, std::ostream& log) {
  LoadedModel loaded = load_model(options.ckpt);
  const VideoDataset data = read_dataset(options.data);
  const std::size_t held_out = std::min(loaded.config.eval.held_out, data.size());

  const auto rows = evaluate_sequences(&loaded.model, data, options.self_eval);
  if (!options.report.parent_path().empty()) ensure_dir(options.report.parent_path());
  std::ofstream out(options.report);
  if (!out) throw IoError("cannot create " + options.report.string());
  out << std::setprecision(17);
  out << "sequence,split,samples,psnr,ssim,mse,last_frame_psnr,last_frame_ssim,last_frame_mse\n";
  MetricReport model_val, base_val;
  for (const auto& r : rows) {
    const bool is_val = r.sequence >= data.size() - held_out;
    out << r.sequence << ',' << (is_val ? "val" : "train") << ',' << r.samples << ',' << r.model.psnr << ','
        << r.model.ssim << ',' << r.model.mse << ',' << r.copy_last.psnr << ',' << r.copy_last.ssim << ','
        << r.copy_last.mse << '\n';
    if (is_val || held_out == 0) {
      model_val.frames.push_back(r.model);
      base_val.frames.push_back(r.copy_last);
    }
  }
  if (!out) throw IoError("write failed: " + options.report.string());
  const FrameMetrics m = model_val.mean(), b = base_val.mean();
  log << std::fixed << std::setprecision(4) << "model      psnr " << m.psnr << " ssim " << m.ssim << " mse " << m.mse
      << "\nlast frame psnr " << b.psnr << " ssim " << b.ssim << " mse " << b.mse << "\n";

  if (options.timing) {
    NoGradGuard no_grad;
    ForwardProfile profile;
    std::size_t frames = 0;
    for (const Sample& s : data.next_frame_samples()) {
      loaded.model.predict_next(data.window(s, loaded.config.model.delta), nullptr, &profile);
      ++frames;
    }
    const double per = frames == 0 ? 0 : 1e3 / static_cast<double>(frames);
    log << "timing over " << frames << " frames: total " << profile.total_seconds * per << " ms/frame, gcpn "
        << profile.gcpn_seconds * per << " ms/frame, lfmn " << profile.lfmn_seconds * per << " ms/frame\n";
  }
}

// ---------------------------------------------------------------------------
// rollout

void cmd_rollout(const RolloutOptions& options, std::ostream& log) {
  LoadedModel loaded = load_model(options.ckpt);
  const FrameSequence frames = load_frames(options.seed_frames);
  const std::size_t context = options.context.value_or(loaded.config.model.delta);
  if (context == 0 || context > frames.size()) {
    throw ConfigError("rollout: need between 1 and " + std::to_string(frames.size()) + " context frames, asked for " +
                      std::to_string(context));
  }
  FrameSequence seed;
  for (std::size_t i = 0; i < context; ++i) seed.push_back(frames[i]);

  const FrameSequence predicted = rollout(loaded.model, seed, options.steps);
  save_frames(options.out, predicted);

  std::ofstream out(options.out / "rollout.csv");
  if (!out) throw IoError("cannot create " + (options.out / "rollout.csv").string());
  out << std::setprecision(17) << "frame_index,psnr,ssim,mse\n";
  std::size_t scored = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    out << i << ',';
    if (context + i < frames.size()) {
      const FrameMetrics m = frame_metrics(predicted[i], frames[context + i]);
      out << m.psnr << ',' << m.ssim << ',' << m.mse;
      ++scored;
    } else {
      out << ",,";
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + (options.out / "rollout.csv").string());
  log << "predicted " << predicted.size() << " frames (" << scored << " scored against ground truth) into "
      << options.out.string() << "\n";
}

// ---------------------------------------------------------------------------
// gradcheck

namespace {

Tensor leaf(Shape shape, Rng& rng, real std = 1) { return randn(std::move(shape), std, rng).set_requires_grad(true); }

struct Probe {
  std::string component;
  std::vector<std::pair<Tensor, ScalarFn>> inputs;
  GradCheckOptions options;
};

GradcheckRow run_probe(const Probe& probe) {
  GradcheckRow row;
  row.component = probe.component;
  for (const auto& [x, f] : probe.inputs) {
    const GradCheckResult r = finite_diff_check(f, x, probe.options);
    row.max_relative_error = std::max(row.max_relative_error, r.max_relative_error);
    row.checked += r.checked;
    row.skipped += r.skipped_at_kinks;
  }
  row.passed = row.checked > 0 && row.max_relative_error < kGradcheckTolerance;
  return row;
}

}  // namespace

std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& options) {
  const RunConfig config = load_run_config(options.config);
  const ModelConfig& mc = config.model;
  const bool previous = debug::corrupt_backward();
  debug::set_corrupt_backward(options.corrupt_backward);

  Rng rng(derive_seed(options.seed, "gradcheck"));
  std::vector<Probe> probes;
  const std::size_t c = 3, k = 3;

  {
    Tensor x = leaf({5, 6, c}, rng), w = leaf({4, c, k, k}, rng);
    Tensor r = randn({5, 6, 4}, 1, rng);
    ScalarFn f = [=](const Tensor&) { return sum(mul(conv2d(x, w, 1, 1), r)); };
    probes.push_back({"conv2d", {{x, f}, {w, f}}, {}});
  }
  {
    Tensor x = leaf({4, 3, c}, rng), w = leaf({c, 2, k, k}, rng);
    Tensor r = randn({8, 6, 2}, 1, rng);
    ScalarFn f = [=](const Tensor&) { return sum(mul(conv_transpose2d(x, w, 2, 1, 1), r)); };
    probes.push_back({"conv_transpose2d", {{x, f}, {w, f}}, {}});
  }
  {
    Tensor x = leaf({4, 5, c}, rng), filt = leaf({4, 5, 2, c, k, k}, rng);
    Tensor r = randn({4, 5, 2}, 1, rng);
    ScalarFn f = [=](const Tensor&) { return sum(mul(dynamic_filter(x, filt), r)); };
    probes.push_back({"dynamic_filter", {{x, f}, {filt, f}}, {}});
  }
  {
    MemoryBank mem{leaf({5, 4}, rng)};
    Tensor z = leaf({3, 3, 4}, rng);
    Tensor r = randn({3, 3, 4}, 1, rng);
    ScalarFn f = [=](const Tensor&) { return sum(mul(read_memory(address_memory(z, mem), mem).m_hat, r)); };
    probes.push_back({"address_read_memory", {{z, f}, {mem.items, f}}, {}});
  }
  {
    Tensor m_hat = leaf({3, 3, 4}, rng);
    FilterGenerator gen = FilterGenerator::delta_init(4, 3, false, real(0.3), rng);
    gen.weights.set_requires_grad(true);
    gen.bias.set_requires_grad(true);
    Tensor z = randn({3, 3, 4}, 1, rng), r = randn({3, 3, 4}, 1, rng);
    ScalarFn f = [=](const Tensor&) {
      return sum(mul(apply_filters(z, generate_filters(AggregatedMemory{m_hat}, gen)), r));
    };
    probes.push_back({"generate_filters", {{m_hat, f}, {gen.weights, f}, {gen.bias, f}}, {}});
  }
  {
    GcpnParams p = GcpnParams::random(4, 1, real(0.5), real(0.5), rng);
    for (Tensor* t : {&p.w_theta, &p.w_phi, &p.w_g}) t->set_requires_grad(true);
    Tensor h = leaf({6, 4}, rng);
    Tensor r = randn({6, 4}, 1, rng);
    ScalarFn f = [=](const Tensor&) { return sum(mul(propagate_step(PropagationState{h}, p).h, r)); };
    probes.push_back({"propagate_step", {{h, f}, {p.w_theta, f}, {p.w_phi, f}, {p.w_g, f}}, {}});
  }
  {
    GcpnParams p = GcpnParams::random(4, 2, real(0.5), real(0.5), rng);
    p.w_o.set_requires_grad(true);
    Tensor z = leaf({2, 3, 4}, rng);
    Tensor r = randn({2, 3, 4}, 1, rng);
    ScalarFn f = [=](const Tensor&) { return sum(mul(propagate(z, p), r)); };
    probes.push_back({"propagate", {{z, f}, {p.w_o, f}}, {}});
  }
  {
    Tensor pred = leaf({5, 5, 2}, rng), target = randn({5, 5, 2}, 1, rng);
    ScalarFn rec = [=](const Tensor&) { return reconstruction_loss(pred, target); };
    ScalarFn grad = [=](const Tensor&) { return gradient_loss(pred, target); };
    // Piecewise linear: a wide step costs no truncation error and keeps
    // roundoff well below the tolerance where the gradient cancels to zero.
    GradCheckOptions wide;
    wide.eps = real(1e-3);
    probes.push_back({"reconstruction_loss", {{pred, rec}}, wide});
    probes.push_back({"gradient_loss", {{pred, grad}}, wide});
  }

  // The full objective on one toy sample, checked per parameter group.
  {
    auto owned = std::make_shared<PredictorModel>(mc, options.seed);
    PredictorModel& model = *owned;
    ShapeSceneConfig scene = config.scene();
    scene.seed = derive_seed(options.seed, "gradcheck/data");
    const FrameSequence seq = gen_moving_shapes(scene, mc.delta + 3);
    const FrameSequence window = pad_window(seq, mc.delta + 1, mc.delta);
    const Tensor target = seq[mc.delta + 2];
    const LossConfig loss{config.training.lambda_g};
    // Perturb the memory and generator off their delta initialization so
    // every group sees a generic operating point.
    Rng jitter(derive_seed(options.seed, "gradcheck/jitter"));
    for (auto& p : model.parameters()) {
      if (p.group == "filter_gen" || p.group == "gcpn") {
        const Tensor noise = randn(p.value.shape(), real(0.05), jitter);
        auto v = p.value.data();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += noise.data()[i];
      }
    }
    ScalarFn f = [owned, window, target, loss](const Tensor&) {
      return total_loss(owned->predict_next(window), target, loss);
    };
    for (const std::string& group : model.groups()) {
      Probe probe;
      probe.component = "total_loss/" + group;
      probe.options.eps = real(1e-3);
      probe.options.five_point = true;
      probe.options.max_coordinates = 96;
      probe.options.sample_seed = derive_seed(options.seed, group);
      for (auto& p : model.parameters()) {
        if (p.group == group) probe.inputs.push_back({p.value, f});
      }
      probes.push_back(std::move(probe));
    }
  }

  std::vector<GradcheckRow> rows;
  try {
    for (const Probe& probe : probes) rows.push_back(run_probe(probe));
  } catch (...) {
    debug::set_corrupt_backward(previous);
    throw;
  }
  debug::set_corrupt_backward(previous);
  return rows;
}

bool cmd_gradcheck(const GradcheckOptions& options, std::ostream& log) {
  const auto rows = run_gradcheck(options);
  bool ok = true;
  log << std::left << std::setw(28) << "component" << std::setw(16) << "max_rel_error" << std::setw(9) << "checked"
      << std::setw(9) << "skipped"
      << "result\n";
  for (const auto& r : rows) {
    ok = ok && r.passed;
    std::ostringstream err;
    err << std::scientific << std::setprecision(3) << r.max_relative_error;
    log << std::setw(28) << r.component << std::setw(16) << err.str() << std::setw(9) << r.checked << std::setw(9)
        << r.skipped << (r.passed ? "pass" : "FAIL") << "\n";
  }
  log << (ok ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance " << kGradcheckTolerance << ")\n";
  return ok;
}

// ---------------------------------------------------------------------------
// ablate

std::vector<std::pair<std::string, ModelConfig>> ablation_variants(const ModelConfig& base) {
  auto with = [&](bool lfmn, bool gcpn, std::size_t items) {
    ModelConfig m = base;
    m.use_lfmn = lfmn;
    m.use_gcpn = gcpn;
    m.memory_items = items;
    return m;
  };
  const std::size_t n = base.memory_items;
  return {
      {"base", with(false, false, n)}, {"lfmn", with(true, false, n)}, {"gcpn", with(false, true, n)},
      {"full", with(true, true, n)},   {"mem_0", with(true, true, 0)}, {"mem_2", with(true, true, 2)},
      {"mem_4", with(true, true, 4)},  {"mem_8", with(true, true, 8)},
  };
}

std::vector<AblationRun> cmd_ablate(const AblateOptions& options, std::ostream& log) {
  if (options.seeds == 0) throw ConfigError("ablate: --seeds must be >= 1");
  RunConfig data_config;
  const VideoDataset data = read_dataset(options.data, &data_config);
  const RunConfig config = options.config ? RunConfig::load(*options.config) : data_config;
  const auto [train, val] = split_held_out(data, config.eval.held_out);
  const auto variants = ablation_variants(config.model);

  struct Job {
    std::string variant;
    ModelConfig model;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& [name, model] : variants)
    for (std::size_t s = 0; s < options.seeds; ++s) jobs.push_back({name, model, options.base_seed + s});

  std::vector<AblationRun> runs(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  auto work = [&](std::size_t i) {
    try {
      const Job& job = jobs[i];
      TrainConfig tc = config.training;
      tc.seed = job.seed;
      PredictorModel model(job.model, job.seed);
      const FitResult result = fit(model, train, val, tc);
      AblationRun& r = runs[i];
      r.variant = job.variant;
      r.seed = job.seed;
      const FrameMetrics m = evaluate_next_frame(model, val);
      r.val_psnr = m.psnr;
      r.val_ssim = m.ssim;
      r.final_train_loss = result.log.empty() ? 0 : result.log.back().train_loss;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(RuntimeEnv::from_environment().max_threads,
                                                           static_cast<unsigned>(jobs.size())));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) work(i);
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ensure_dir(options.out);
  std::ofstream out(options.out / "ablation.csv");
  if (!out) throw IoError("cannot create " + (options.out / "ablation.csv").string());
  out << std::setprecision(17) << "variant,seed,val_psnr,val_ssim,final_train_loss\n";
  for (const auto& r : runs) {
    out << r.variant << ',' << r.seed << ',' << r.val_psnr << ',' << r.val_ssim << ',' << r.final_train_loss << '\n';
  }

  std::ofstream summary(options.out / "ablation_summary.csv");
  if (!summary) throw IoError("cannot create " + (options.out / "ablation_summary.csv").string());
  summary << std::setprecision(17) << "variant,runs,psnr_mean,psnr_sd,ssim_mean,ssim_sd\n";
  for (const auto& [name, model] : variants) {
    std::vector<double> p, s;
    for (const auto& r : runs) {
      if (r.variant == name) {
        p.push_back(r.val_psnr);
        s.push_back(r.val_ssim);
      }
    }
    auto stats = [](const std::vector<double>& v) {
      double mean = 0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double var = 0;
      for (double x : v) var += (x - mean) * (x - mean);
      // Sample standard deviation; zero for a single run.
      const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
      return std::pair{mean, sd};
    };
    const auto [pm, psd] = stats(p);
    const auto [sm, ssd] = stats(s);
    summary << name << ',' << p.size() << ',' << pm << ',' << psd << ',' << sm << ',' << ssd << '\n';
    log << std::left << std::setw(6) << name << std::fixed << std::setprecision(3) << " psnr " << pm << " +- " << psd
        << "  ssim " << sm << " +- " << ssd << "\n";
  }
  return runs;
}

}  // namespace vp
