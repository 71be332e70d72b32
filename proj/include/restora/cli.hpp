#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "restora/restora.hpp"

namespace restora::cli {

namespace fs = std::filesystem;

inline constexpr const char* kSchemaLine = "# restora-results v1";
inline constexpr const char* kResultHeader =
    "task,prior,N,C,seed,psnr_db,ssim,consistency_rmse,wall_time_s,field_evals";

inline const std::vector<std::size_t> kAblationSteps{4, 8, 16, 32, 64, 128, 256};
inline const std::vector<std::size_t> kAblationCorrections{0, 1, 2, 3};

struct RunConfig {
  std::string command;
  fs::path prior;
  std::string task;
  double sigma = 0.2;
  std::optional<std::pair<std::size_t, std::size_t>> box;
  double fraction = 0.7;
  std::size_t factor = 2;
  double sigma_meas = 0.01;
  std::optional<std::size_t> ode_steps;
  std::size_t corrections = 1;
  std::uint64_t seed = 0;
  fs::path in_dir;
  std::size_t samples = 8;
  std::size_t seeds = 10;
  fs::path out_dir = "restora_out";
  bool markdown = false;
  std::optional<Shape> shape;
  // train
  std::size_t steps = 5000;
  std::size_t batch = 256;
  std::size_t hidden = 32;
  double lr = 1e-2;
  double momentum = 0.9;
  bool cosine = false;
};

struct ResultRow {
  std::string task;
  std::string prior;
  std::size_t n_steps = 0;
  std::size_t corrections = 0;
  std::uint64_t seed = 0;
  MetricsRecord metrics;
  bool has_ssim = true;
};

// ---------------------------------------------------------------- config

namespace detail {

template <class T>
T json_get(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

inline Shape shape_from(const std::vector<std::size_t>& v, const char* what) {
  if (v.size() != 3 || v[0] == 0 || v[1] == 0 || v[2] == 0) {
    throw ConfigError(std::string(what) + ": expected three positive dimensions C H W");
  }
  return Shape{v[0], v[1], v[2]};
}

inline std::pair<std::size_t, std::size_t> box_from(const std::vector<std::size_t>& v) {
  if (v.size() != 2) throw ConfigError("box: expected two values H W");
  return {v[0], v[1]};
}

}  // namespace detail

/// Applies a flat JSON object onto cfg. Keys are the long flag names with
/// '-' written as '_'.
inline void apply_json(RunConfig& cfg, const nlohmann::json& j) {
  using detail::json_get;
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "prior") cfg.prior = json_get<std::string>(v, key);
    else if (key == "task") cfg.task = json_get<std::string>(v, key);
    else if (key == "sigma") cfg.sigma = json_get<double>(v, key);
    else if (key == "box") cfg.box = detail::box_from(json_get<std::vector<std::size_t>>(v, key));
    else if (key == "fraction") cfg.fraction = json_get<double>(v, key);
    else if (key == "factor") cfg.factor = json_get<std::size_t>(v, key);
    else if (key == "sigma_meas") cfg.sigma_meas = json_get<double>(v, key);
    else if (key == "ode_steps") cfg.ode_steps = json_get<std::size_t>(v, key);
    else if (key == "corrections") cfg.corrections = json_get<std::size_t>(v, key);
    else if (key == "seed") cfg.seed = json_get<std::uint64_t>(v, key);
    else if (key == "in") cfg.in_dir = json_get<std::string>(v, key);
    else if (key == "samples") cfg.samples = json_get<std::size_t>(v, key);
    else if (key == "seeds") cfg.seeds = json_get<std::size_t>(v, key);
    else if (key == "out") cfg.out_dir = json_get<std::string>(v, key);
    else if (key == "md") cfg.markdown = json_get<bool>(v, key);
    else if (key == "shape") cfg.shape = detail::shape_from(json_get<std::vector<std::size_t>>(v, key), "shape");
    else if (key == "steps") cfg.steps = json_get<std::size_t>(v, key);
    else if (key == "batch") cfg.batch = json_get<std::size_t>(v, key);
    else if (key == "hidden") cfg.hidden = json_get<std::size_t>(v, key);
    else if (key == "lr") cfg.lr = json_get<double>(v, key);
    else if (key == "momentum") cfg.momentum = json_get<double>(v, key);
    else if (key == "cosine") cfg.cosine = json_get<bool>(v, key);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
}

inline nlohmann::json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
}

/// Task descriptor from the config. Box size defaults to 40/128 of each side.
inline DegradationTask make_task(const RunConfig& cfg, const Shape& shape) {
  DegradationTask task;
  task.sigma_meas = cfg.sigma_meas;
  if (cfg.task == "denoise") {
    task.kind = Denoise{cfg.sigma};
  } else if (cfg.task == "box") {
    const auto [bh, bw] = cfg.box.value_or(std::pair{std::max<std::size_t>(1, shape.height * 40 / 128),
                                                     std::max<std::size_t>(1, shape.width * 40 / 128)});
    task.kind = BoxInpaint{bh, bw};
  } else if (cfg.task == "random") {
    task.kind = RandomInpaint{cfg.fraction};
  } else if (cfg.task == "sr") {
    task.kind = SuperResolution{cfg.factor};
  } else if (cfg.task.empty()) {
    throw ConfigError("--task is required (denoise|box|random|sr)");
  } else {
    throw ConfigError("unknown task '" + cfg.task + "' (expected denoise|box|random|sr)");
  }
  validate_task(task, shape);
  return task;
}

/// 64 steps for denoising and box inpainting, 128 for random inpainting and
/// super-resolution.
inline std::size_t default_steps(const std::string& task) {
  return (task == "random" || task == "sr") ? 128 : 64;
}

inline std::size_t resolved_steps(const RunConfig& cfg) {
  const std::size_t n = cfg.ode_steps.value_or(default_steps(cfg.task));
  if (n == 0) throw ConfigError("--ode-steps must be >= 1");
  return n;
}

// ---------------------------------------------------------------- priors

struct LoadedPrior {
  std::string label;
  std::optional<GmmPrior> gmm;
  std::optional<MlpVelocityNet> net;
  Shape shape;
  std::unique_ptr<VelocityField> field;

  // Rebinds a checkpoint prior to an image shape of the same size.
  void bind_shape(const Shape& s) {
    if (!net || s == shape) return;
    if (s.size() != net->sample_dim()) return;
    shape = s;
    field = std::make_unique<MlpVelocityField>(*net, s);
  }

  ImageTensor draw(SeededRng& rng) const {
    if (gmm) return gmm_sample(*gmm, rng);
    return sample_unconditional(*field, TimeGrid(128), shape, rng);
  }
};

inline bool has_magic(const fs::path& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  std::string head(magic.size(), '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  return in && head == magic;
}

/// GMM JSON spec or RFNN checkpoint, told apart by the checkpoint magic.
inline LoadedPrior load_prior(const RunConfig& cfg) {
  if (cfg.prior.empty()) throw ConfigError("--prior is required");
  if (!fs::exists(cfg.prior)) throw ConfigError("prior '" + cfg.prior.string() + "' does not exist");
  LoadedPrior p;
  p.label = cfg.prior.stem().string();
  if (has_magic(cfg.prior, "RFNN")) {
    p.net = checkpoint_load(cfg.prior);
    p.shape = cfg.shape.value_or(Shape{1, 1, p.net->sample_dim()});
    p.field = std::make_unique<MlpVelocityField>(*p.net, p.shape);
  } else {
    p.gmm = load_gmm(cfg.prior);
    if (cfg.shape) p.gmm = p.gmm->reshaped(*cfg.shape);
    p.shape = p.gmm->shape();
    p.field = std::make_unique<GmmVelocityField>(*p.gmm);
  }
  return p;
}

// ---------------------------------------------------------------- workers

/// Worker count: hardware concurrency, capped by RESTORA_THREADS.
inline std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("RESTORA_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long cap = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0' || cap == 0) throw ConfigError("RESTORA_THREADS must be a positive integer");
    n = std::min<std::size_t>(n, cap);
  }
  return n;
}

/// Runs fn(i) for i in [0, count) on the worker pool. Rethrows the
/// exception of the lowest failing index.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t workers = std::min(worker_count(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = count;
  std::exception_ptr failure;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (i < failed_at) {
              failed_at = i;
              failure = std::current_exception();
            }
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------- reports

inline std::string format_double(double v, int digits = 9) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string csv_line(const ResultRow& r) {
  const auto& m = r.metrics;
  return r.task + "," + r.prior + "," + std::to_string(r.n_steps) + "," + std::to_string(r.corrections) + "," +
         std::to_string(r.seed) + "," + format_double(m.psnr_db) + "," +
         (r.has_ssim ? format_double(m.ssim) : std::string("NA")) + "," + format_double(m.consistency_rmse) + "," +
         format_double(m.wall_time_s, 6) + "," + std::to_string(m.field_evals);
}

inline void write_results_csv(const fs::path& path, const std::vector<ResultRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << kSchemaLine << '\n' << kResultHeader << '\n';
  for (const auto& r : rows) out << csv_line(r) << '\n';
}

struct CellSummary {
  std::string task, prior;
  std::size_t n_steps = 0, corrections = 0, count = 0;
  double psnr_db = 0, ssim = 0, consistency_rmse = 0, wall_time_s = 0;
  std::uint64_t field_evals = 0;
  bool has_ssim = true;
};

/// Means over consecutive rows that share (task, prior, N, C).
inline std::vector<CellSummary> summarize(const std::vector<ResultRow>& rows) {
  std::vector<CellSummary> cells;
  for (const auto& r : rows) {
    if (cells.empty() || cells.back().n_steps != r.n_steps || cells.back().corrections != r.corrections ||
        cells.back().task != r.task || cells.back().prior != r.prior) {
      cells.push_back(CellSummary{r.task, r.prior, r.n_steps, r.corrections});
    }
    auto& c = cells.back();
    ++c.count;
    c.psnr_db += r.metrics.psnr_db;
    c.ssim += r.metrics.ssim;
    c.consistency_rmse += r.metrics.consistency_rmse;
    c.wall_time_s += r.metrics.wall_time_s;
    c.field_evals = r.metrics.field_evals;
    c.has_ssim = c.has_ssim && r.has_ssim;
  }
  for (auto& c : cells) {
    const double n = static_cast<double>(c.count);
    c.psnr_db /= n;
    c.ssim /= n;
    c.consistency_rmse /= n;
    c.wall_time_s /= n;
  }
  return cells;
}

inline void write_summary_csv(const fs::path& path, const std::vector<CellSummary>& cells) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << kSchemaLine << '\n'
      << "task,prior,N,C,count,mean_psnr_db,mean_ssim,mean_consistency_rmse,mean_wall_time_s,field_evals\n";
  for (const auto& c : cells) {
    out << c.task << ',' << c.prior << ',' << c.n_steps << ',' << c.corrections << ',' << c.count << ','
        << format_double(c.psnr_db) << ',' << (c.has_ssim ? format_double(c.ssim) : std::string("NA")) << ','
        << format_double(c.consistency_rmse) << ',' << format_double(c.wall_time_s, 6) << ',' << c.field_evals
        << '\n';
  }
}

inline void write_markdown(const fs::path& path, const std::vector<CellSummary>& cells) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << "| task | prior | N | C | images | PSNR (dB) | SSIM | consistency RMSE | time (s) | field evals |\n"
      << "|---|---|---:|---:|---:|---:|---:|---:|---:|---:|\n";
  char buf[256];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "| %s | %s | %zu | %zu | %zu | %.2f | %s | %.4f | %.4f | %llu |\n",
                  c.task.c_str(), c.prior.c_str(), c.n_steps, c.corrections, c.count, c.psnr_db,
                  c.has_ssim ? format_double(c.ssim, 4).c_str() : "NA", c.consistency_rmse, c.wall_time_s,
                  static_cast<unsigned long long>(c.field_evals));
    out << buf;
  }
}

// ---------------------------------------------------------------- jobs

/// Degrades x with the seed's data stream, restores with the seed itself,
/// and scores the clamped result against x.
inline ResultRow restore_one(const LoadedPrior& prior, const std::string& task_label, const DegradationTask& task,
                             const ImageTensor& x, std::size_t n_steps, std::size_t corrections,
                             std::uint64_t seed, Observation* obs_out = nullptr, ImageTensor* out = nullptr) {
  SeededRng data_rng(mix_seed(seed));
  Observation obs = degrade(x, task, data_rng);
  const auto report = restore(*prior.field, obs, RestorationConfig{n_steps, corrections, seed, false});
  const ImageTensor output = clamp_unit(report.output);
  ResultRow row;
  row.task = task_label;
  row.prior = prior.label;
  row.n_steps = n_steps;
  row.corrections = corrections;
  row.seed = seed;
  const auto& s = x.shape();
  row.has_ssim = s.height >= ssim_params::kWindow && s.width >= ssim_params::kWindow;
  row.metrics.psnr_db = psnr(output, x);
  row.metrics.ssim = row.has_ssim ? ssim(output, x) : 0.0;
  row.metrics.consistency_rmse = consistency_rmse(output, obs.z, obs.m);
  row.metrics.wall_time_s = report.wall_time_s;
  row.metrics.field_evals = report.field_evals;
  if (obs_out) *obs_out = std::move(obs);
  if (out) *out = output;
  return row;
}

/// A clean image drawn from the prior with the seed's data stream.
inline ImageTensor synthetic_image(const LoadedPrior& prior, std::uint64_t seed) {
  SeededRng rng(mix_seed(seed) ^ 0x5a5a5a5a5a5a5a5aULL);
  return prior.draw(rng);
}

inline bool pnm_writable(const Shape& s) { return s.channels == 1 || s.channels == 3; }

inline void write_image(const ImageTensor& x, const fs::path& stem) {
  save_raw(x, fs::path(stem).concat(".rft"));
  if (pnm_writable(x.shape())) {
    save_pnm(x, fs::path(stem).concat(x.shape().channels == 1 ? ".pgm" : ".ppm"));
  }
}

struct NamedImage {
  std::string name;
  ImageTensor image;
};

inline std::vector<NamedImage> read_input_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("--in '" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm" || ext == ".pnm" || ext == ".rft")) {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<NamedImage> images;
  for (const auto& f : files) {
    images.push_back({f.stem().string(), f.extension() == ".rft" ? load_raw(f) : load_pnm(f)});
  }
  return images;
}

// ---------------------------------------------------------------- commands

inline int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const LoadedPrior prior = load_prior(cfg);
  if (!prior.gmm) throw ConfigError("train: --prior must be a GMM spec");
  if (cfg.hidden == 0) throw ConfigError("--hidden must be >= 1");
  const std::size_t d = prior.gmm->dim();
  SeededRng init_rng(mix_seed(cfg.seed));
  auto net = MlpVelocityNet::xavier({d + 1, cfg.hidden, cfg.hidden, d}, init_rng);
  const GmmPrior target = *prior.gmm;
  const PriorSampler sampler = [&target](SeededRng& rng) { return gmm_sample(target, rng); };
  const auto result = train(net, sampler, TrainConfig{cfg.batch, cfg.steps, cfg.lr, cfg.momentum, cfg.seed, cfg.cosine});
  fs::create_directories(cfg.out_dir);
  checkpoint_save(net, cfg.out_dir / "model.rfnn");
  std::ofstream trace(cfg.out_dir / "loss_trace.csv");
  trace << "step,loss\n";
  for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
    trace << i << ',' << format_double(result.loss_trace[i]) << '\n';
  }
  out << "final loss " << format_double(result.smoothed_final(), 6) << '\n';
  return 0;
}

inline int cmd_restore(const RunConfig& cfg, std::ostream& out) {
  LoadedPrior prior = load_prior(cfg);
  std::vector<NamedImage> images;
  if (!cfg.in_dir.empty()) {
    images = read_input_dir(cfg.in_dir);
    if (!images.empty() && !cfg.shape) prior.bind_shape(images.front().image.shape());
    for (const auto& im : images) {
      if (im.image.shape() != prior.shape) {
        throw ShapeError("image '" + im.name + "' has shape " + to_string(im.image.shape()) +
                         " but the prior expects " + to_string(prior.shape));
      }
    }
  } else {
    for (std::size_t j = 0; j < cfg.samples; ++j) {
      char name[32];
      std::snprintf(name, sizeof name, "image_%05zu", j);
      images.push_back({name, synthetic_image(prior, cfg.seed + j)});
    }
  }
  const DegradationTask task = make_task(cfg, prior.shape);
  const std::size_t n = resolved_steps(cfg);
  std::vector<ResultRow> rows(images.size());
  std::vector<Observation> observations(images.size());
  std::vector<ImageTensor> outputs(images.size(), ImageTensor(prior.shape));
  parallel_for(images.size(), [&](std::size_t j) {
    rows[j] = restore_one(prior, cfg.task, task, images[j].image, n, cfg.corrections, cfg.seed + j,
                          &observations[j], &outputs[j]);
  });
  fs::create_directories(cfg.out_dir / "restored");
  fs::create_directories(cfg.out_dir / "degraded");
  for (std::size_t j = 0; j < images.size(); ++j) {
    write_image(outputs[j], cfg.out_dir / "restored" / images[j].name);
    write_image(observations[j].z, cfg.out_dir / "degraded" / images[j].name);
  }
  write_results_csv(cfg.out_dir / "results.csv", rows);
  const auto cells = summarize(rows);
  if (cfg.markdown) write_markdown(cfg.out_dir / "results.md", cells);
  for (const auto& c : cells) {
    out << c.task << " N=" << c.n_steps << " C=" << c.corrections << " images=" << c.count
        << " psnr=" << format_double(c.psnr_db, 5) << " consistency=" << format_double(c.consistency_rmse, 4)
        << '\n';
  }
  return 0;
}

inline int cmd_ablate(const RunConfig& cfg, std::ostream& out) {
  const LoadedPrior prior = load_prior(cfg);
  const DegradationTask task = make_task(cfg, prior.shape);
  const std::size_t cells = kAblationSteps.size() * kAblationCorrections.size();
  std::vector<ResultRow> rows(cells * cfg.seeds);
  parallel_for(rows.size(), [&](std::size_t job) {
    const std::size_t cell = job / cfg.seeds, s = job % cfg.seeds;
    const std::size_t n = kAblationSteps[cell / kAblationCorrections.size()];
    const std::size_t c = kAblationCorrections[cell % kAblationCorrections.size()];
    const std::uint64_t seed = cfg.seed + cell * 1'000'000ULL + s;
    rows[job] = restore_one(prior, cfg.task, task, synthetic_image(prior, seed), n, c, seed);
  });
  fs::create_directories(cfg.out_dir);
  write_results_csv(cfg.out_dir / "ablation.csv", rows);
  const auto summary = summarize(rows);
  write_summary_csv(cfg.out_dir / "ablation_summary.csv", summary);
  if (cfg.markdown) write_markdown(cfg.out_dir / "ablation.md", summary);
  out << "ablation rows " << rows.size() << '\n';
  return 0;
}

inline int cmd_sample(const RunConfig& cfg, std::ostream& out) {
  const LoadedPrior prior = load_prior(cfg);
  const std::size_t n = cfg.ode_steps.value_or(128);
  if (n == 0) throw ConfigError("--ode-steps must be >= 1");
  if (cfg.samples == 0) {
    out << "no samples requested\n";
    return 0;
  }
  std::vector<ImageTensor> samples(cfg.samples, ImageTensor(prior.shape));
  parallel_for(cfg.samples, [&](std::size_t j) {
    SeededRng rng(cfg.seed + j);
    samples[j] = sample_unconditional(*prior.field, TimeGrid(n), prior.shape, rng);
  });
  fs::create_directories(cfg.out_dir);
  std::ofstream index(cfg.out_dir / "samples.csv");
  index << "index,seed,file\n";
  for (std::size_t j = 0; j < samples.size(); ++j) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%05zu", j);
    write_image(samples[j], cfg.out_dir / name);
    index << j << ',' << cfg.seed + j << ',' << name << ".rft\n";
  }
  out << "wrote " << samples.size() << " samples\n";
  return 0;
}

// ---------------------------------------------------------------- entry

struct FlagValues {
  std::string config;
  std::optional<std::string> prior, task, in_dir, out_dir;
  std::optional<double> sigma, fraction, sigma_meas, lr, momentum;
  std::optional<std::size_t> factor, ode_steps, corrections, samples, seeds, steps, batch, hidden;
  std::optional<std::uint64_t> seed;
  std::vector<std::size_t> box, shape;
  bool md = false, cosine = false;
};

inline void add_flags(CLI::App* sub, FlagValues& f) {
  sub->add_option("--config", f.config, "flat JSON config; flags override its keys");
  sub->add_option("--prior", f.prior, "GMM spec (JSON) or network checkpoint");
  sub->add_option("--task", f.task, "denoise | box | random | sr");
  sub->add_option("--sigma", f.sigma, "denoising noise level");
  sub->add_option("--box", f.box, "box height and width")->expected(2);
  sub->add_option("--fraction", f.fraction, "masked fraction for random inpainting");
  sub->add_option("--factor", f.factor, "super-resolution factor");
  sub->add_option("--sigma-meas", f.sigma_meas, "measurement noise on known pixels");
  sub->add_option("--ode-steps", f.ode_steps, "Euler steps N");
  sub->add_option("--corrections", f.corrections, "trajectory corrections C per step");
  sub->add_option("--seed", f.seed, "base seed");
  sub->add_option("--in", f.in_dir, "directory of PGM/PPM/RFT inputs");
  sub->add_option("--out", f.out_dir, "output directory");
  sub->add_option("--samples", f.samples, "synthetic images (restore) or samples (sample)");
  sub->add_option("--seeds", f.seeds, "seeds per ablation cell");
  sub->add_option("--shape", f.shape, "sample shape C H W")->expected(3);
  sub->add_option("--steps", f.steps, "training steps");
  sub->add_option("--batch", f.batch, "training batch size");
  sub->add_option("--hidden", f.hidden, "hidden width");
  sub->add_option("--lr", f.lr, "learning rate");
  sub->add_option("--momentum", f.momentum, "momentum");
  sub->add_flag("--cosine", f.cosine, "cosine learning-rate decay");
  sub->add_flag("--md", f.md, "also write a Markdown table");
}

inline RunConfig resolve(const std::string& command, const FlagValues& f) {
  RunConfig cfg;
  cfg.command = command;
  if (!f.config.empty()) apply_json(cfg, load_json_file(f.config));
  if (f.prior) cfg.prior = *f.prior;
  if (f.task) cfg.task = *f.task;
  if (f.sigma) cfg.sigma = *f.sigma;
  if (!f.box.empty()) cfg.box = detail::box_from(f.box);
  if (f.fraction) cfg.fraction = *f.fraction;
  if (f.factor) cfg.factor = *f.factor;
  if (f.sigma_meas) cfg.sigma_meas = *f.sigma_meas;
  if (f.ode_steps) cfg.ode_steps = *f.ode_steps;
  if (f.corrections) cfg.corrections = *f.corrections;
  if (f.seed) cfg.seed = *f.seed;
  if (f.in_dir) cfg.in_dir = *f.in_dir;
  if (f.out_dir) cfg.out_dir = *f.out_dir;
  if (f.samples) cfg.samples = *f.samples;
  if (f.seeds) cfg.seeds = *f.seeds;
  if (!f.shape.empty()) cfg.shape = detail::shape_from(f.shape, "--shape");
  if (f.steps) cfg.steps = *f.steps;
  if (f.batch) cfg.batch = *f.batch;
  if (f.hidden) cfg.hidden = *f.hidden;
  if (f.lr) cfg.lr = *f.lr;
  if (f.momentum) cfg.momentum = *f.momentum;
  if (f.cosine) cfg.cosine = true;
  if (f.md) cfg.markdown = true;
  return cfg;
}

inline int dispatch(const RunConfig& cfg, std::ostream& out) {
  if (cfg.command == "train") return cmd_train(cfg, out);
  if (cfg.command == "restore") return cmd_restore(cfg, out);
  if (cfg.command == "ablate") return cmd_ablate(cfg, out);
  if (cfg.command == "sample") return cmd_sample(cfg, out);
  throw ConfigError("unknown command '" + cfg.command + "'");
}

/// Exit codes: 0 success, 1 usage or configuration error, 2 numerical abort.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Mask-guided image restoration with flow-matching priors"};
  app.require_subcommand(1);
  FlagValues flags;
  std::vector<CLI::App*> subs{
      app.add_subcommand("train", "fit a velocity network to a GMM spec"),
      app.add_subcommand("restore", "restore images and score them"),
      app.add_subcommand("ablate", "sweep ODE steps x corrections"),
      app.add_subcommand("sample", "draw unconditional samples"),
  };
  for (auto* s : subs) add_flags(s, flags);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  try {
    const auto* chosen = app.get_subcommands().front();
    return dispatch(resolve(chosen->get_name(), flags), out);
  } catch (const NumericalError& e) {
    err << "numerical abort: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace restora::cli
