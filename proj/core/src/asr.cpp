#include "bytevq/asr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "bytevq/ctc.hpp"
#include "bytevq/error.hpp"
#include "store_io.hpp"

namespace bytevq {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr const char* kPrefix = "asr";

}  // namespace

void AsrConfig::validate() const {
  if (feature_dim < 1) throw ConfigError("feature_dim must be positive");
  if (context < 0) throw ConfigError("context must be non-negative");
  if (hidden < 1) throw ConfigError("hidden must be positive");
  if (vocab < 1) throw ConfigError("vocab must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  optimizer.validate();
}

FrameMlpSpec AsrModel::spec() const {
  FrameMlpSpec s;
  s.feature_dim = config.feature_dim;
  s.context = config.context;
  s.hidden = config.hidden;
  s.outputs = config.vocab + 1;
  return s;
}

FrameMlpView AsrModel::view() const { return frame_mlp_view(params, kPrefix, spec()); }

AsrModel make_asr_model(const AsrConfig& config) {
  config.validate();
  AsrModel model;
  model.config = config;
  Rng rng(config.seed);
  frame_mlp_init(model.params, kPrefix, model.spec(), rng);
  return model;
}

DenseMatrix asr_logits(const AsrModel& model, const DenseMatrix& features) {
  return frame_mlp_forward(model.view(), features, nullptr);
}

AsrModel train_asr(const std::vector<std::vector<int>>& targets,
                   const std::vector<DenseMatrix>& features, const AsrConfig& config,
                   AsrTrainReport* report) {
  if (targets.size() != features.size())
    throw DataError("target count " + std::to_string(targets.size()) +
                    " does not match feature count " + std::to_string(features.size()));
  AsrModel model = make_asr_model(config);
  const int blank = config.blank();

  std::vector<size_t> order(targets.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng shuffle_rng(config.seed ^ 0xda3e39cb94b95bdbull);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);

    AsrEpoch stats;
    long feasible_total = 0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      size_t stop = std::min(order.size(), start + config.batch_size);
      struct Item {
        size_t idx;
        FrameMlpTrace trace;
        CtcResult ctc;
      };
      std::vector<Item> batch;
      for (size_t b = start; b < stop; ++b) {
        size_t idx = order[b];
        if (targets[idx].empty() ||
            ctc_min_frames(targets[idx]) > features[idx].rows) {
          ++stats.skipped;
          continue;
        }
        Item item;
        item.idx = idx;
        DenseMatrix logits = frame_mlp_forward(model.view(), features[idx], &item.trace);
        item.ctc = ctc_loss(logits, targets[idx], blank);
        if (!item.ctc.feasible) {  // zero-probability path despite enough frames
          ++stats.skipped;
          continue;
        }
        batch.push_back(std::move(item));
      }
      if (batch.empty()) continue;

      model.params.zero_grad();
      double scale = 1.0 / static_cast<double>(batch.size());
      for (Item& item : batch) {
        stats.loss += item.ctc.loss;
        for (double& g : item.ctc.logit_grad.data) g *= scale;
        frame_mlp_backward(model.params, kPrefix, model.spec(), item.trace,
                           item.ctc.logit_grad);
      }
      feasible_total += static_cast<long>(batch.size());
      optimizer_step(model.params, config.optimizer);
    }
    if (feasible_total > 0) stats.loss /= static_cast<double>(feasible_total);
    if (report) report->epochs.push_back(stats);
  }
  return model;
}

void save_asr_model(const AsrModel& model, const std::string& path) {
  nlohmann::json body;
  body["format"] = "bytevq-asr";
  body["version"] = 1;
  nlohmann::json cfg;
  cfg["feature_dim"] = model.config.feature_dim;
  cfg["context"] = model.config.context;
  cfg["hidden"] = model.config.hidden;
  cfg["vocab"] = model.config.vocab;
  cfg["epochs"] = model.config.epochs;
  cfg["batch_size"] = model.config.batch_size;
  cfg["optimizer"] = detail::optimizer_to_json(model.config.optimizer);
  cfg["seed"] = model.config.seed;
  body["config"] = cfg;
  body["params"] = detail::params_to_json(model.params);
  detail::write_bundle(body, path);
}

AsrModel load_asr_model(const std::string& path) {
  nlohmann::json body = detail::read_bundle(path, "bytevq-asr", 1);
  const nlohmann::json& cfg = body.at("config");
  AsrConfig config;
  config.feature_dim = cfg.at("feature_dim").get<int>();
  config.context = cfg.at("context").get<int>();
  config.hidden = cfg.at("hidden").get<int>();
  config.vocab = cfg.at("vocab").get<int>();
  config.epochs = cfg.at("epochs").get<int>();
  config.batch_size = cfg.at("batch_size").get<int>();
  config.optimizer = detail::optimizer_from_json(cfg.at("optimizer"));
  config.seed = cfg.at("seed").get<uint64_t>();
  AsrModel model;
  model.config = config;
  detail::params_from_json(body.at("params"), model.params);
  return model;
}

namespace {

struct PrefixMass {
  double pb = kNegInf;   // mass of paths ending in blank
  double pnb = kNegInf;  // mass of paths ending in the last symbol
  double total() const { return log_add(pb, pnb); }
};

using BeamMap = std::map<std::vector<int>, PrefixMass>;

void rank_beams(const BeamMap& beams, std::vector<const BeamMap::value_type*>& ranked) {
  ranked.clear();
  for (const auto& entry : beams) ranked.push_back(&entry);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto* a, const auto* b) {
    double ta = a->second.total(), tb = b->second.total();
    if (ta != tb) return ta > tb;
    return a->first < b->first;  // map order is already lexicographic; ties keep it
  });
}

}  // namespace

std::vector<Hypothesis> ctc_prefix_beam_search(const DenseMatrix& logits, int blank,
                                               int beam_width, int n_best,
                                               int prune_candidates) {
  if (beam_width < 1) throw InputError("beam_width must be >= 1");
  if (n_best < 1) throw InputError("n_best must be >= 1");
  const int classes = logits.cols;
  if (blank < 0 || blank >= classes) throw InputError("blank id out of range");

  BeamMap beams;
  beams[{}].pb = 0.0;

  std::vector<double> lp(classes);
  std::vector<int> cands;
  std::vector<const BeamMap::value_type*> ranked;
  for (int t = 0; t < logits.rows; ++t) {
    const double* row = logits.row(t);
    double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (int k = 0; k < classes; ++k) z += std::exp(row[k] - mx);
    double logz = mx + std::log(z);
    for (int k = 0; k < classes; ++k) lp[k] = row[k] - logz;

    cands.clear();
    for (int k = 0; k < classes; ++k)
      if (k != blank) cands.push_back(k);
    if (prune_candidates > 0 && prune_candidates < static_cast<int>(cands.size())) {
      std::stable_sort(cands.begin(), cands.end(),
                       [&](int a, int b) { return lp[a] != lp[b] ? lp[a] > lp[b] : a < b; });
      cands.resize(prune_candidates);
      std::sort(cands.begin(), cands.end());
    }

    BeamMap next;
    auto mass_of = [&next](const std::vector<int>& prefix) -> PrefixMass& {
      return next[prefix];
    };
    for (const auto& [prefix, mass] : beams) {
      double total = mass.total();
      PrefixMass& stay = mass_of(prefix);
      stay.pb = log_add(stay.pb, total + lp[blank]);
      if (!prefix.empty())  // repeated symbol collapses unless a blank intervenes
        stay.pnb = log_add(stay.pnb, mass.pnb + lp[prefix.back()]);
      for (int k : cands) {
        double src = (!prefix.empty() && k == prefix.back()) ? mass.pb : total;
        if (src == kNegInf) continue;  // no surviving path realizes this extension
        std::vector<int> ext = prefix;
        ext.push_back(k);
        PrefixMass& grown = mass_of(ext);
        grown.pnb = log_add(grown.pnb, src + lp[k]);
      }
    }

    rank_beams(next, ranked);
    beams.clear();
    for (size_t i = 0; i < ranked.size() && i < static_cast<size_t>(beam_width); ++i)
      beams.insert(*ranked[i]);
  }

  rank_beams(beams, ranked);
  std::vector<Hypothesis> out;
  for (size_t i = 0; i < ranked.size() && i < static_cast<size_t>(n_best); ++i)
    out.push_back({ranked[i]->first, ranked[i]->second.total()});
  return out;
}

std::vector<int> corrupt_stream(const std::vector<int>& stream, int symbols, double sub_rate,
                                double del_rate, double ins_rate, uint64_t seed) {
  if (symbols < 1) throw InputError("symbols must be positive");
  auto check_rate = [](double r, const char* name) {
    if (!(r >= 0.0 && r <= 1.0)) throw InputError(std::string(name) + " must be in [0, 1]");
  };
  check_rate(sub_rate, "sub_rate");
  check_rate(del_rate, "del_rate");
  check_rate(ins_rate, "ins_rate");

  Rng rng(seed);
  std::vector<int> out;
  out.reserve(stream.size());
  for (int id : stream) {
    if (rng.uniform01() < del_rate) {
      // deleted; an insertion may still follow this position
    } else if (rng.uniform01() < sub_rate) {
      out.push_back(rng.uniform_int(symbols));
    } else {
      out.push_back(id);
    }
    if (rng.uniform01() < ins_rate) out.push_back(rng.uniform_int(symbols));
  }
  return out;
}

void EditCounts::add(const EditCounts& other) {
  subs += other.subs;
  dels += other.dels;
  ins += other.ins;
  ref_len += other.ref_len;
}

namespace {

std::vector<std::vector<uint32_t>> tokenize(const std::vector<uint32_t>& text, TokenMode mode) {
  std::vector<std::vector<uint32_t>> tokens;
  if (mode == TokenMode::kChars) {
    for (uint32_t cp : text) tokens.push_back({cp});
    return tokens;
  }
  std::vector<uint32_t> word;
  for (uint32_t cp : text) {
    if (cp == ' ') {
      if (!word.empty()) tokens.push_back(std::move(word));
      word.clear();
    } else {
      word.push_back(cp);
    }
  }
  if (!word.empty()) tokens.push_back(std::move(word));
  return tokens;
}

}  // namespace

EditCounts token_error_rate(const std::vector<uint32_t>& reference,
                            const std::vector<uint32_t>& hypothesis, TokenMode mode) {
  std::vector<std::vector<uint32_t>> ref = tokenize(reference, mode);
  std::vector<std::vector<uint32_t>> hyp = tokenize(hypothesis, mode);
  const size_t m = ref.size(), n = hyp.size();

  // dist[i][j]: edit distance between ref[0..i) and hyp[0..j).
  std::vector<std::vector<int>> dist(m + 1, std::vector<int>(n + 1));
  for (size_t i = 0; i <= m; ++i) dist[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= n; ++j) dist[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= m; ++i) {
    for (size_t j = 1; j <= n; ++j) {
      int diag = dist[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      int del = dist[i - 1][j] + 1;
      int insert = dist[i][j - 1] + 1;
      dist[i][j] = std::min({diag, del, insert});
    }
  }

  EditCounts counts;
  counts.ref_len = static_cast<long>(m);
  size_t i = m, j = n;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      int diag = dist[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      if (dist[i][j] == diag) {
        if (ref[i - 1] != hyp[j - 1]) ++counts.subs;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && dist[i][j] == dist[i - 1][j] + 1) {
      ++counts.dels;
      --i;
      continue;
    }
    ++counts.ins;
    --j;
  }
  return counts;
}

}  // namespace bytevq
