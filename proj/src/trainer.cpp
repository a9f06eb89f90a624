// SPDX-License-Identifier: Apache-2.0

#include "som/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace som {

using namespace nn;
namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (warmup_epochs < 0 || !(warmup_epochs < lora_activation_epoch) || !(lora_activation_epoch < epochs))
    throw ConfigError("train: need warmup_epochs < lora_activation_epoch < epochs");
  if (!(lr_min < lr_warmup_start) || !(lr_warmup_start < lr_max) || !(lr_min >= 0))
    throw ConfigError("train: need 0 <= lr_min < lr_warmup_start < lr_max");
  if (!(cosine_period_epochs > 0)) throw ConfigError("train: cosine_period_epochs must be > 0");
  if (weight_decay < 0 || !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(adam_eps > 0))
    throw ConfigError("train: invalid optimizer settings");
}

Json to_json(const TrainConfig& c) {
  return Json{{"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"warmup_epochs", c.warmup_epochs},
              {"lora_activation_epoch", c.lora_activation_epoch},
              {"lr_max", c.lr_max},
              {"lr_warmup_start", c.lr_warmup_start},
              {"lr_min", c.lr_min},
              {"cosine_period_epochs", c.cosine_period_epochs},
              {"weight_decay", c.weight_decay},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_eps", c.adam_eps},
              {"grad_clip", c.grad_clip},
              {"seed", c.seed},
              {"eval_train_each_epoch", c.eval_train_each_epoch}};
}

TrainConfig train_config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("train config: expected an object");
  TrainConfig c;
  const Json defaults = to_json(c);
  for (const auto& [k, _] : j.items()) {
    if (!defaults.contains(k)) throw ConfigError("train config: unknown key '" + k + "'");
  }
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.lora_activation_epoch = j.value("lora_activation_epoch", c.lora_activation_epoch);
    c.lr_max = j.value("lr_max", c.lr_max);
    c.lr_warmup_start = j.value("lr_warmup_start", c.lr_warmup_start);
    c.lr_min = j.value("lr_min", c.lr_min);
    c.cosine_period_epochs = j.value("cosine_period_epochs", c.cosine_period_epochs);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.seed = j.value("seed", c.seed);
    c.eval_train_each_epoch = j.value("eval_train_each_epoch", c.eval_train_each_epoch);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("train config: ") + ex.what());
  }
  c.validate();
  return c;
}

double lr_at(double epoch, const TrainConfig& cfg) {
  if (!(epoch >= 0.0) || epoch > cfg.epochs) throw DomainError("lr_at: epoch outside [0, epochs]");
  const double w = cfg.warmup_epochs;
  if (epoch < w) return cfg.lr_warmup_start + (cfg.lr_max - cfg.lr_warmup_start) * (epoch / w);
  const double progress = std::min((epoch - w) / cfg.cosine_period_epochs, 1.0);
  return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(kPi * progress)) / 2.0;
}

double global_grad_norm(const ParameterStore& store) {
  double s = 0.0;
  for (const auto& [_, p] : store.all()) {
    if (!p.trainable) continue;
    for (double g : p.grad.data) s += g * g;
  }
  return std::sqrt(s);
}

double AdamW::step(ParameterStore& store, double lr) {
  const double norm = global_grad_norm(store);
  const double clip = cfg_.grad_clip > 0 && norm > cfg_.grad_clip ? cfg_.grad_clip / norm : 1.0;
  for (auto& [name, p] : store.all()) {
    if (!p.trainable) continue;
    if (!p.adam_m.same_shape(p.value)) p.adam_m = Tensor(p.value.rows, p.value.cols);
    if (!p.adam_v.same_shape(p.value)) p.adam_v = Tensor(p.value.rows, p.value.cols);
    const long t = ++steps_[name];
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.data[i] * clip;
      double& m = p.adam_m.data[i];
      double& v = p.adam_v.data[i];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
      const double update = (m / c1) / (std::sqrt(v / c2) + cfg_.adam_eps);
      p.value.data[i] -= lr * (update + cfg_.weight_decay * p.value.data[i]);
    }
  }
  return norm;
}

Json to_json(const EpochLog& e) {
  Json j;
  j["type"] = "epoch";
  j["epoch"] = e.epoch;
  j["lr"] = e.lr;
  j["train_loss"] = e.train_loss;
  if (e.eval_train_loss >= 0) j["eval_train_loss"] = e.eval_train_loss;
  j["val_loss"] = e.val_loss;
  j["val_accuracy"] = e.val.accuracy;
  j["val_nmae_power"] = e.val.nmae_power;
  j["val_nmse_power"] = e.val.nmse_power;
  j["val_nmae_delay"] = e.val.nmae_delay;
  j["val_nmse_delay"] = e.val.nmse_delay;
  j["trainable"] = e.trainable;
  j["lora_active"] = e.lora_active;
  return j;
}

double mean_loss(Model& model, const std::vector<Sample>& samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const Sample& s : samples) total += compute_loss(model.predict(s), s.targets, model.config().loss).total;
  return total / static_cast<double>(samples.size());
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, Rng rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

constexpr std::uint64_t kMixStream = 0x6D69780000000000ULL;
constexpr std::uint64_t kDropoutStream = 0x64726F7000000000ULL;

std::string engine_state(const Rng& rng) {
  std::ostringstream os;
  os << rng.engine();
  return os.str();
}

}  // namespace

TrainResult train_model(Model& model, const std::vector<Sample>& train, const std::vector<Sample>& val,
                        const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  if (train.empty()) throw ConfigError("train: empty training split");
  const int lora_epoch = options.lora_start_epoch >= 0 ? options.lora_start_epoch : cfg.lora_activation_epoch;
  AdamW optimizer(cfg);
  TrainResult result;
  result.initial_train_loss = mean_loss(model, train);

  std::ofstream log_file;
  if (options.out_dir) {
    fs::create_directories(*options.out_dir);
    log_file.open(*options.out_dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
    if (!log_file) throw IoError("cannot write " + (*options.out_dir / "metrics.jsonl").string());
    log_file << Json{{"type", "initial"}, {"train_loss", result.initial_train_loss}}.dump() << "\n";
  }
  ParameterStore& store = model.params();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch >= lora_epoch && !model.lora_active()) model.set_lora_active(true);

    std::vector<const Sample*> order;
    const auto primary = shuffled(train.size(), Rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch)));
    if (options.mix != nullptr && !options.mix->empty()) {
      const auto secondary =
          shuffled(options.mix->size(), Rng::derive(cfg.seed ^ kMixStream, static_cast<std::uint64_t>(epoch)));
      for (std::size_t i = 0; i < std::max(primary.size(), secondary.size()); ++i) {
        if (i < primary.size()) order.push_back(&train[primary[i]]);
        if (i < secondary.size()) order.push_back(&(*options.mix)[secondary[i]]);
      }
    } else {
      for (std::size_t i : primary) order.push_back(&train[i]);
    }

    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t steps = (order.size() + bs - 1) / bs;
    const std::uint64_t dropout_base = Rng::derive(cfg.seed ^ kDropoutStream, static_cast<std::uint64_t>(epoch)).next_u64();
    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr_at(static_cast<double>(epoch), cfg);
    double loss_sum = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      const double lr = lr_at(epoch + static_cast<double>(step) / static_cast<double>(steps), cfg);
      store.zero_grad();
      const std::size_t begin = step * bs;
      const std::size_t end = std::min(order.size(), begin + bs);
      const double inv = 1.0 / static_cast<double>(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const Sample& s = *order[i];
        Graph g(true, Rng::derive(dropout_base, s.index).next_u64());
        Var loss = compute_loss(g, model.forward(g, s), s.targets, model.config().loss);
        loss_sum += loss.value().data[0];
        g.backward(scale(loss, inv));
      }
      optimizer.step(store, lr);
    }
    entry.train_loss = loss_sum / static_cast<double>(order.size());
    if (cfg.eval_train_each_epoch) entry.eval_train_loss = mean_loss(model, train);
    entry.trainable = store.trainable_count();
    entry.lora_active = model.lora_active();
    if (!val.empty()) {
      const EvalResult ev = evaluate_samples(model, val);
      entry.val_loss = ev.mean_loss;
      entry.val = ev.metrics;
      if (result.best_epoch < 0 || ev.mean_loss < result.best_val_loss) {
        result.best_epoch = epoch;
        result.best_val_loss = ev.mean_loss;
        if (options.out_dir) {
          CheckpointState st;
          st.epoch = epoch + 1;
          st.seed = cfg.seed;
          st.rng_state = engine_state(Rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch + 1)));
          st.best_val_loss = ev.mean_loss;
          save_checkpoint(*options.out_dir / "best", model, st);
        }
      }
    }
    result.log.push_back(entry);
    if (log_file) log_file << to_json(entry).dump() << "\n" << std::flush;
    if (options.on_epoch) options.on_epoch(entry);
  }
  if (options.out_dir) {
    CheckpointState st;
    st.epoch = cfg.epochs;
    st.seed = cfg.seed;
    st.rng_state = engine_state(Rng::derive(cfg.seed, static_cast<std::uint64_t>(cfg.epochs)));
    st.best_val_loss = result.best_val_loss;
    save_checkpoint(*options.out_dir / "final", model, st);
  }
  return result;
}

TrainRun train(const fs::path& dataset_dir, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
               const fs::path& out_dir, int threads) {
  train_cfg.validate();
  const Dataset ds = load_dataset(dataset_dir);
  if (ds.manifest.train.empty() || ds.manifest.val.empty())
    throw ConfigError("train: dataset needs non-empty train and val splits");
  const auto train_samples = prepare_samples(ds, ds.manifest.train, model_cfg, threads);
  const auto val_samples = prepare_samples(ds, ds.manifest.val, model_cfg, threads);
  Model model(model_cfg);
  fs::create_directories(out_dir);
  Json resolved;
  resolved["command"] = "train";
  resolved["data"] = dataset_dir.string();
  resolved["model"] = to_json(model_cfg);
  resolved["train"] = to_json(train_cfg);
  write_json(out_dir / "resolved_config.json", resolved);
  TrainOptions opt;
  opt.out_dir = out_dir;
  TrainRun run;
  run.result = train_model(model, train_samples, val_samples, train_cfg, opt);
  run.best_checkpoint = out_dir / "best";
  run.final_checkpoint = out_dir / "final";
  return run;
}

std::size_t few_shot_count(double fraction, std::size_t train_size) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw DomainError("few-shot fraction must be in [0, 1]");
  // small slack so e.g. 0.014 * 6000 is 84, not 83
  return std::min(train_size,
                  static_cast<std::size_t>(std::floor(fraction * static_cast<double>(train_size) + 1e-9)));
}

std::vector<std::size_t> few_shot_subset(const std::vector<std::size_t>& train, double fraction, std::uint64_t seed) {
  const std::size_t k = few_shot_count(fraction, train.size());
  const auto order = shuffled(train.size(), Rng(seed));
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(train[order[i]]);
  std::sort(out.begin(), out.end());
  return out;
}

FineTuneResult fine_tune_few_shot(Model& model, const Dataset& target, double fraction, const TrainConfig& cfg,
                                  const Dataset* mix, int threads, const std::vector<Sample>* target_test) {
  const auto subset = few_shot_subset(target.manifest.train, fraction, cfg.seed);
  std::vector<Sample> own_test;
  if (target_test == nullptr) {
    own_test = prepare_samples(target, target.manifest.test, model.config(), threads);
    target_test = &own_test;
  }
  FineTuneResult r;
  r.samples_used = subset.size();
  r.zero_shot = evaluate_samples(model, *target_test);
  if (subset.empty()) {
    r.result = r.zero_shot;
    return r;
  }
  const auto samples = prepare_samples(target, subset, model.config(), threads);
  std::vector<Sample> mix_samples;
  if (mix != nullptr) {
    const auto mix_subset = few_shot_subset(mix->manifest.train,
                                            std::min(1.0, static_cast<double>(subset.size()) /
                                                              std::max<double>(1.0, mix->manifest.train.size())),
                                            cfg.seed ^ kMixStream);
    mix_samples = prepare_samples(*mix, mix_subset, model.config(), threads);
    r.mix_samples_used = mix_samples.size();
  }
  TrainOptions opt;
  opt.lora_start_epoch = 0;
  opt.mix = mix != nullptr ? &mix_samples : nullptr;
  train_model(model, samples, {}, cfg, opt);
  r.result = evaluate_samples(model, *target_test);
  return r;
}

}  // namespace som
