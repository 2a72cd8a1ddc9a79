#include "xva/pipeline.hpp"

#include <sstream>

#include <nlohmann/json.hpp>

#include "xva/error.hpp"
#include "xva/rng.hpp"

namespace xva {

Prediction predict(const ClassifierModel<float>& model, const MultiViewSample<float>& sample) {
  const auto out = model.classify(sample);
  Prediction p;
  p.trial_id = sample.trial_id;
  p.subject_id = sample.subject_id;
  p.true_label = sample.label;
  p.probabilities = {static_cast<double>(out.probabilities[0]),
                     static_cast<double>(out.probabilities[1])};
  // Renormalize in double so the pair sums to 1 to within rounding.
  const double s = p.probabilities[0] + p.probabilities[1];
  p.probabilities[0] /= s;
  p.probabilities[1] /= s;
  return p;
}

CrossValidationResult cross_validate(
    std::span<const MultiViewSample<float>> samples, const ClassifierConfig& config,
    const ClassifierTrainOptions& options, std::size_t k, FoldMode mode, std::uint64_t seed,
    const std::function<void(std::size_t, double)>& on_fold) {
  std::vector<FoldItem> items;
  for (const auto& s : samples) items.push_back({s.trial_id, s.subject_id, s.label});
  CrossValidationResult cv;
  cv.plan = kfold(items, k, mode, seed);

  Rng seeds(seed);
  for (std::size_t f = 0; f < k; ++f) {
    ClassifierConfig cfg = config;
    cfg.seed = seeds.next_u64();
    ClassifierTrainOptions opt = options;
    opt.seed = seeds.next_u64();

    std::vector<MultiViewSample<float>> train;
    for (auto i : cv.plan.train_indices(f)) train.push_back(samples[i]);
    ClassifierModel<float> model(cfg);
    model.init();
    train_classifier<float>(model, train, opt);

    std::vector<Prediction> preds;
    std::size_t correct = 0;
    for (auto i : cv.plan.test_indices(f)) {
      preds.push_back(predict(model, samples[i]));
      correct += preds.back().predicted() == preds.back().true_label ? 1 : 0;
    }
    if (on_fold) on_fold(f, static_cast<double>(correct) / static_cast<double>(preds.size()));
    cv.folds.push_back(std::move(preds));
  }
  cv.report = evaluate(cv.folds);
  return cv;
}

std::vector<double> fold_accuracies(const CrossValidationResult& cv) {
  std::vector<double> acc;
  for (const auto& f : cv.report.folds) acc.push_back(f.metrics.accuracy);
  return acc;
}

std::vector<std::vector<Prediction>> parse_predictions_jsonl(const std::string& text,
                                                             const std::string& source) {
  std::vector<std::vector<Prediction>> folds;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Prediction p;
      p.trial_id = j.at("trial_id").get<std::string>();
      p.subject_id = j.at("subject_id").get<std::string>();
      p.true_label = j.at("true_label").get<int>();
      const auto probs = j.at("probabilities").get<std::vector<double>>();
      if (probs.size() != 2) throw UsageError("need two probabilities");
      p.probabilities = {probs[0], probs[1]};
      validate(p);
      const auto fold = j.at("fold").get<std::size_t>();
      if (fold >= folds.size()) folds.resize(fold + 1);
      folds[fold].push_back(std::move(p));
    } catch (const std::exception& e) {
      throw IoError(source + ": bad prediction on line " + std::to_string(lineno) + " (" +
                    e.what() + ")");
    }
  }
  if (folds.empty()) throw IoError(source + ": no predictions");
  return folds;
}

}  // namespace xva
