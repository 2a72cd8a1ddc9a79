#include "xva/evalkit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "xva/error.hpp"
#include "xva/rng.hpp"

namespace xva {

void validate(const Prediction& p) {
  if (p.true_label != 0 && p.true_label != 1) {
    throw UsageError("prediction " + p.trial_id + ": label must be 0 or 1");
  }
  const auto [a, b] = p.probabilities;
  if (!(a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0) || std::abs(a + b - 1.0) > 1e-6) {
    throw UsageError("prediction " + p.trial_id + ": probabilities must sum to 1");
  }
}

ConfusionCounts confusion_counts(std::span<const Prediction> preds) {
  ConfusionCounts c;
  for (const auto& p : preds) {
    validate(p);
    const int y = p.true_label;
    const int yhat = p.predicted();
    if (y == 1 && yhat == 1) ++c.tp;
    else if (y == 0 && yhat == 1) ++c.fp;
    else if (y == 0 && yhat == 0) ++c.tn;
    else ++c.fn;
  }
  return c;
}

BinaryMetrics scalars_from_counts(const ConfusionCounts& c) {
  BinaryMetrics m;
  m.counts = c;
  const auto ratio = [](double num, double den, bool& flag) {
    if (den == 0.0) {
      flag = true;
      return 0.0;
    }
    return num / den;
  };
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
  bool unused = false;
  m.accuracy = ratio(tp + tn, tp + tn + fp + fn, unused);
  m.sensitivity = ratio(tp, tp + fn, m.degenerate_sensitivity);
  m.specificity = ratio(tn, tn + fp, m.degenerate_specificity);
  m.f1 = ratio(2 * tp, 2 * tp + fp + fn, m.degenerate_f1);
  m.mcc = ratio(tp * tn - fp * fn, std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)),
                m.degenerate_mcc);
  return m;
}

BinaryMetrics confusion_and_scalars(std::span<const Prediction> preds) {
  if (preds.empty()) throw UsageError("confusion_and_scalars: no predictions");
  return scalars_from_counts(confusion_counts(preds));
}

namespace {

void check_binary_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw UsageError("scores and labels differ in length");
  }
  std::size_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw UsageError("labels must be 0 or 1");
    pos += static_cast<std::size_t>(y);
  }
  if (pos == 0 || pos == labels.size()) {
    throw UndefinedMetricError("AUC is undefined when only one class is present");
  }
}

// Indices sorted by descending score.
std::vector<std::size_t> order_desc(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

void unpack(std::span<const Prediction> preds, std::vector<double>& scores,
            std::vector<int>& labels) {
  for (const auto& p : preds) {
    validate(p);
    scores.push_back(p.score());
    labels.push_back(p.true_label);
  }
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_binary_inputs(scores, labels);
  const auto idx = order_desc(scores);
  // Walk tied groups from the top; each positive beats every negative
  // ranked strictly below it and ties count one half.
  double n_pos = 0, n_neg = 0;
  for (int y : labels) (y == 1 ? n_pos : n_neg) += 1;
  double wins = 0.0;
  double neg_below = n_neg;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    double gp = 0, gn = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? gp : gn) += 1;
      ++j;
    }
    neg_below -= gn;
    wins += gp * neg_below + 0.5 * gp * gn;
    i = j;
  }
  return wins / (n_pos * n_neg);
}

double roc_auc(std::span<const Prediction> preds) {
  std::vector<double> s;
  std::vector<int> y;
  unpack(preds, s, y);
  return roc_auc(s, y);
}

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  check_binary_inputs(scores, labels);
  const auto idx = order_desc(scores);
  double n_pos = 0;
  for (int y : labels) n_pos += y;
  double tp = 0, fp = 0, prev_recall = 0, area = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    const double recall = tp / n_pos;
    area += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return area;
}

double pr_auc(std::span<const Prediction> preds) {
  std::vector<double> s;
  std::vector<int> y;
  unpack(preds, s, y);
  return pr_auc(s, y);
}

// --- Folds -----------------------------------------------------------------------

std::vector<std::size_t> FoldPlan::test_indices(std::size_t fold) const {
  if (fold >= k) throw UsageError("fold index out of range");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::train_indices(std::size_t fold) const {
  if (fold >= k) throw UsageError("fold index out of range");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (auto f : fold_of) ++sizes[f];
  return sizes;
}

FoldPlan kfold(std::span<const FoldItem> items, std::size_t k, FoldMode mode,
               std::uint64_t seed) {
  if (k < 2) throw UsageError("kfold: k must be at least 2");
  if (k > items.size()) {
    throw UsageError("kfold: k=" + std::to_string(k) + " exceeds sample count " +
                     std::to_string(items.size()));
  }
  FoldPlan plan;
  plan.k = k;
  plan.mode = mode;
  plan.fold_of.assign(items.size(), 0);
  for (const auto& it : items) plan.trial_ids.push_back(it.trial_id);
  Rng rng(seed);

  if (mode == FoldMode::kStratified) {
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].label != 0 && items[i].label != 1) {
        throw UsageError("kfold: labels must be 0 or 1");
      }
      by_class[items[i].label].push_back(i);
    }
    if (by_class[0].empty() || by_class[1].empty()) {
      throw UsageError("kfold: stratified mode needs both classes");
    }
    std::size_t counter = 0;
    for (auto& members : by_class) {
      rng.shuffle(std::span<std::size_t>(members));
      for (std::size_t i : members) plan.fold_of[i] = counter++ % k;
    }
    return plan;
  }

  std::map<std::string, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < items.size(); ++i) by_subject[items[i].subject_id].push_back(i);
  if (k > by_subject.size()) {
    throw UsageError("kfold: k=" + std::to_string(k) + " exceeds subject count " +
                     std::to_string(by_subject.size()));
  }
  std::vector<const std::vector<std::size_t>*> subjects;
  for (const auto& [id, members] : by_subject) subjects.push_back(&members);
  rng.shuffle(std::span<const std::vector<std::size_t>*>(subjects));
  std::stable_sort(subjects.begin(), subjects.end(),
                   [](const auto* a, const auto* b) { return a->size() > b->size(); });
  std::vector<std::size_t> load(k, 0);
  for (const auto* members : subjects) {
    const auto f = static_cast<std::size_t>(
        std::min_element(load.begin(), load.end()) - load.begin());
    for (std::size_t i : *members) plan.fold_of[i] = f;
    load[f] += members->size();
  }
  return plan;
}

// --- Trust -----------------------------------------------------------------------

const char* trust_group_name(TrustGroup g) {
  switch (g) {
    case TrustGroup::kTP: return "TP";
    case TrustGroup::kTN: return "TN";
    case TrustGroup::kFP: return "FP";
    case TrustGroup::kFN: return "FN";
  }
  return "?";
}

std::array<TrustSpectrum, 4> trust_spectrum(std::span<const Prediction> preds) {
  if (preds.empty()) throw UsageError("trust_spectrum: no predictions");
  std::array<TrustSpectrum, 4> out;
  for (std::size_t g = 0; g < 4; ++g) out[g].group = static_cast<TrustGroup>(g);
  for (const auto& p : preds) {
    validate(p);
    const int yhat = p.predicted();
    TrustGroup g;
    if (p.true_label == 1) g = yhat == 1 ? TrustGroup::kTP : TrustGroup::kFN;
    else g = yhat == 1 ? TrustGroup::kFP : TrustGroup::kTN;
    const double t = std::clamp(p.probabilities[static_cast<std::size_t>(p.true_label)], 0.0, 1.0);
    out[static_cast<std::size_t>(g)].trust.push_back(t);
  }
  const double width = 1.0 / static_cast<double>(kTrustBins);
  for (auto& s : out) {
    s.present = !s.trust.empty();
    if (!s.present) continue;
    const double n = static_cast<double>(s.trust.size());
    s.density.assign(kTrustBins, 0.0);
    double sum = 0.0;
    for (double t : s.trust) {
      const auto bin = std::min(static_cast<std::size_t>(t * kTrustBins), kTrustBins - 1);
      s.density[bin] += 1.0;
      sum += t;
    }
    for (auto& d : s.density) d /= n * width;
    s.nts = std::clamp(sum / n, 0.0, 1.0);
  }
  return out;
}

// --- Reports ---------------------------------------------------------------------

namespace {

FoldMetrics metrics_for(std::string name, std::span<const Prediction> preds) {
  FoldMetrics fm;
  fm.name = std::move(name);
  fm.n = preds.size();
  fm.metrics = confusion_and_scalars(preds);
  try {
    fm.roc_auc = roc_auc(preds);
    fm.pr_auc = pr_auc(preds);
  } catch (const UndefinedMetricError&) {
    fm.roc_auc.reset();
    fm.pr_auc.reset();
  }
  return fm;
}

std::string opt(const std::optional<double>& v) { return v ? format_real(*v) : ""; }

std::string degenerate_list(const BinaryMetrics& m) {
  std::string s;
  auto add = [&s](bool flag, const char* name) {
    if (!flag) return;
    if (!s.empty()) s += ';';
    s += name;
  };
  add(m.degenerate_sensitivity, "sensitivity");
  add(m.degenerate_specificity, "specificity");
  add(m.degenerate_f1, "f1");
  add(m.degenerate_mcc, "mcc");
  return s;
}

}  // namespace

EvaluationReport evaluate(std::span<const std::vector<Prediction>> folds) {
  if (folds.empty()) throw UsageError("evaluate: no folds");
  EvaluationReport report;
  std::vector<Prediction> all;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (folds[f].empty()) {
      throw UsageError("evaluate: fold " + std::to_string(f) + " has no predictions");
    }
    report.folds.push_back(metrics_for(std::to_string(f), folds[f]));
    all.insert(all.end(), folds[f].begin(), folds[f].end());
  }
  report.pooled = metrics_for("pooled", all);
  return report;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw UsageError("mean_std: no values");
  const double n = static_cast<double>(values.size());
  double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  // One refinement step; makes a constant input come back exactly.
  double residual = 0.0;
  for (double v : values) residual += v - mean;
  mean += residual / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

std::string format_real(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string report_csv(const EvaluationReport& report) {
  std::string out =
      "fold,n,tp,fp,tn,fn,accuracy,sensitivity,specificity,f1,mcc,roc_auc,pr_auc,degenerate\n";
  auto row = [&out](const FoldMetrics& f) {
    const auto& m = f.metrics;
    out += f.name + "," + std::to_string(f.n) + "," + std::to_string(m.counts.tp) + "," +
           std::to_string(m.counts.fp) + "," + std::to_string(m.counts.tn) + "," +
           std::to_string(m.counts.fn) + "," + format_real(m.accuracy) + "," +
           format_real(m.sensitivity) + "," + format_real(m.specificity) + "," +
           format_real(m.f1) + "," + format_real(m.mcc) + "," + opt(f.roc_auc) + "," +
           opt(f.pr_auc) + "," + degenerate_list(m) + "\n";
  };
  for (const auto& f : report.folds) row(f);
  row(report.pooled);
  return out;
}

std::string metric_block_csv(const EvaluationReport& report) {
  struct Row {
    const char* name;
    std::optional<double> (*get)(const FoldMetrics&);
  };
  static const Row rows[] = {
      {"accuracy", [](const FoldMetrics& f) -> std::optional<double> { return f.metrics.accuracy; }},
      {"sensitivity", [](const FoldMetrics& f) -> std::optional<double> { return f.metrics.sensitivity; }},
      {"specificity", [](const FoldMetrics& f) -> std::optional<double> { return f.metrics.specificity; }},
      {"f1", [](const FoldMetrics& f) -> std::optional<double> { return f.metrics.f1; }},
      {"roc_auc", [](const FoldMetrics& f) { return f.roc_auc; }},
      {"pr_auc", [](const FoldMetrics& f) { return f.pr_auc; }},
      {"mcc", [](const FoldMetrics& f) -> std::optional<double> { return f.metrics.mcc; }},
  };
  std::string out = "metric,pooled,fold_mean,fold_std\n";
  for (const auto& r : rows) {
    std::vector<double> per_fold;
    for (const auto& f : report.folds) {
      if (auto v = r.get(f)) per_fold.push_back(*v);
    }
    out += std::string(r.name) + "," + opt(r.get(report.pooled)) + ",";
    if (!per_fold.empty()) {
      const auto ms = mean_std(per_fold);
      out += format_real(ms.mean) + "," + format_real(ms.std);
    } else {
      out += ",";
    }
    out += "\n";
  }
  return out;
}

std::string predictions_jsonl(std::span<const std::vector<Prediction>> folds) {
  std::string out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    for (const auto& p : folds[f]) {
      nlohmann::ordered_json j;
      j["trial_id"] = p.trial_id;
      j["subject_id"] = p.subject_id;
      j["fold"] = f;
      j["true_label"] = p.true_label;
      j["probabilities"] = {p.probabilities[0], p.probabilities[1]};
      j["predicted"] = p.predicted();
      out += j.dump() + "\n";
    }
  }
  return out;
}

std::string trust_csv(const std::array<TrustSpectrum, 4>& spectra) {
  std::string out = "group,present,n,nts\n";
  for (const auto& s : spectra) {
    out += std::string(trust_group_name(s.group)) + "," + (s.present ? "1" : "0") + ",";
    if (s.present) out += std::to_string(s.trust.size()) + "," + format_real(s.nts);
    else out += ",";
    out += "\n";
  }
  return out;
}

std::string trust_density_csv(const std::array<TrustSpectrum, 4>& spectra) {
  std::string out = "group,bin_low,bin_high,density\n";
  for (const auto& s : spectra) {
    if (!s.present) continue;
    for (std::size_t b = 0; b < kTrustBins; ++b) {
      out += std::string(trust_group_name(s.group)) + "," +
             format_real(static_cast<double>(b) / kTrustBins) + "," +
             format_real(static_cast<double>(b + 1) / kTrustBins) + "," +
             format_real(s.density[b]) + "\n";
    }
  }
  return out;
}

}  // namespace xva
