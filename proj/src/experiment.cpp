#include "docnli/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "docnli/baselines.hpp"
#include "docnli/segmentation.hpp"
#include "docnli/synthetic.hpp"
#include "docnli/util.hpp"

namespace docnli {

using nlohmann::json;

std::string ExperimentConfig::to_json() const {
  json j = {
      {"paths",
       {{"corpus", paths.corpus},
        {"dev_corpus", paths.dev_corpus},
        {"vocab", paths.vocab},
        {"checkpoint", paths.checkpoint},
        {"output_dir", paths.output_dir}}},
      {"segmentation",
       {{"max_context_length", segmentation.max_context_length},
        {"min_surrounding_tokens", segmentation.min_surrounding_tokens}}},
      {"encoder",
       {{"hidden_dim", encoder.hidden_dim},
        {"num_layers", encoder.num_layers},
        {"num_heads", encoder.num_heads},
        {"ffn_dim", encoder.ffn_dim},
        {"max_positions", encoder.max_positions},
        {"dropout", encoder.dropout}}},
      {"train",
       {{"lambda", train.lambda},
        {"learning_rate", train.learning_rate},
        {"batch_size", train.batch_size},
        {"epochs", train.epochs},
        {"warmup_steps", train.warmup_steps},
        {"weight_decay", train.weight_decay},
        {"max_grad_norm", train.max_grad_norm}}},
      {"mode",
       {{"hypothesis", hypothesis_symbol_mode ? "symbol" : "text"},
        {"weighted_nli", train.use_weighted_nli},
        {"oracle_nli", oracle_nli}}},
      {"vocab",
       {{"target_size", vocab_target_size},
        {"min_pair_frequency", vocab_min_pair_frequency}}},
      {"seed", seed}};
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed experiment config: ") + e.what());
  }
  ExperimentConfig config;
  try {
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      config.paths.corpus = p.value("corpus", config.paths.corpus);
      config.paths.dev_corpus = p.value("dev_corpus", config.paths.dev_corpus);
      config.paths.vocab = p.value("vocab", config.paths.vocab);
      config.paths.checkpoint = p.value("checkpoint", config.paths.checkpoint);
      config.paths.output_dir = p.value("output_dir", config.paths.output_dir);
    }
    if (j.contains("segmentation")) {
      const auto& s = j.at("segmentation");
      config.segmentation.max_context_length =
          s.value("max_context_length", config.segmentation.max_context_length);
      config.segmentation.min_surrounding_tokens =
          s.value("min_surrounding_tokens", config.segmentation.min_surrounding_tokens);
    }
    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      config.encoder.hidden_dim = e.value("hidden_dim", config.encoder.hidden_dim);
      config.encoder.num_layers = e.value("num_layers", config.encoder.num_layers);
      config.encoder.num_heads = e.value("num_heads", config.encoder.num_heads);
      config.encoder.ffn_dim = e.value("ffn_dim", config.encoder.ffn_dim);
      config.encoder.max_positions = e.value("max_positions", config.encoder.max_positions);
      config.encoder.dropout = e.value("dropout", config.encoder.dropout);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      config.train.lambda = t.value("lambda", config.train.lambda);
      config.train.learning_rate = t.value("learning_rate", config.train.learning_rate);
      config.train.batch_size = t.value("batch_size", config.train.batch_size);
      config.train.epochs = t.value("epochs", config.train.epochs);
      config.train.warmup_steps = t.value("warmup_steps", config.train.warmup_steps);
      config.train.weight_decay = t.value("weight_decay", config.train.weight_decay);
      config.train.max_grad_norm = t.value("max_grad_norm", config.train.max_grad_norm);
    }
    if (j.contains("mode")) {
      const auto& m = j.at("mode");
      std::string hypothesis = m.value("hypothesis", "text");
      if (hypothesis != "text" && hypothesis != "symbol") {
        throw ValidationError("mode.hypothesis must be \"text\" or \"symbol\"");
      }
      config.hypothesis_symbol_mode = hypothesis == "symbol";
      config.train.use_weighted_nli = m.value("weighted_nli", config.train.use_weighted_nli);
      config.oracle_nli = m.value("oracle_nli", config.oracle_nli);
    }
    if (j.contains("vocab")) {
      const auto& v = j.at("vocab");
      config.vocab_target_size = v.value("target_size", config.vocab_target_size);
      config.vocab_min_pair_frequency =
          v.value("min_pair_frequency", config.vocab_min_pair_frequency);
    }
    config.seed = j.value("seed", config.seed);
    config.train.seed = config.seed;
  } catch (const json::exception& e) {
    throw ParseError(std::string("mistyped experiment config field: ") + e.what());
  }
  config.train.validate();
  config.segmentation.validate();
  return config;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return from_json(read_file(path));
}

void ExperimentConfig::save(const std::string& path) const { write_file(path, to_json()); }

ImportSummary run_import(const std::string& input_path, const std::string& output_path) {
  Corpus corpus = import_contract_nli(input_path);
  save_corpus(corpus, output_path);
  ImportSummary summary;
  summary.documents = static_cast<int>(corpus.documents.size());
  summary.hypotheses = static_cast<int>(corpus.hypotheses.size());
  for (const auto& doc : corpus.documents) {
    switch (doc.format) {
      case DocFormat::Plain: ++summary.plain; break;
      case DocFormat::Html: ++summary.html; break;
      case DocFormat::Pdf: ++summary.pdf; break;
    }
  }
  return summary;
}

namespace {

Vocabulary load_or_build_vocab(const ExperimentConfig& config, const Corpus& corpus) {
  if (std::filesystem::exists(config.paths.vocab)) {
    return Vocabulary::load(config.paths.vocab);
  }
  log_info("vocabulary " + config.paths.vocab + " absent, building it from the corpus");
  Vocabulary vocab = build_vocabulary(
      corpus, {config.vocab_target_size, config.vocab_min_pair_frequency});
  std::filesystem::path path(config.paths.vocab);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  vocab.save(config.paths.vocab);
  return vocab;
}

std::vector<TrainExample> build_training_examples(const Corpus& corpus,
                                                  const Vocabulary& vocab,
                                                  const ExperimentConfig& config) {
  std::vector<TrainExample> examples;
  for (const auto& doc : corpus.documents) {
    TokenizedDocument tokenized = tokenize_document(doc, vocab);
    for (const auto& hyp : corpus.hypotheses) {
      const Annotation& ann = doc.annotations.at(hyp.id);
      if (config.oracle_nli) {
        if (ann.label == NLILabel::NotMentioned) continue;
        examples.push_back(make_oracle_example(tokenized, ann, hyp, vocab));
        continue;
      }
      for (AssembledContext& ac : build_contexts(tokenized, hyp, vocab, config.segmentation,
                                                 config.hypothesis_mode())) {
        Context aligned = align_teacher(std::move(ac.context), ann, tokenized);
        examples.push_back({std::move(ac.input), aligned.teacher});
      }
    }
  }
  return examples;
}

void write_loss_trace(const std::vector<TraceRow>& trace, const std::string& path) {
  std::ostringstream out;
  out << "epoch,step,loss_span,loss_nli,loss\n";
  out << std::setprecision(17);
  for (const TraceRow& row : trace) {
    out << row.epoch << "," << row.step << "," << row.loss_span << "," << row.loss_nli << ","
        << row.loss << "\n";
  }
  write_file(path, out.str());
}

}  // namespace

Vocabulary run_build_vocab(const ExperimentConfig& config) {
  Corpus corpus = load_corpus(config.paths.corpus);
  Vocabulary vocab = build_vocabulary(
      corpus, {config.vocab_target_size, config.vocab_min_pair_frequency});
  std::filesystem::path path(config.paths.vocab);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  vocab.save(config.paths.vocab);
  return vocab;
}

LossBreakdown run_train(const ExperimentConfig& config) {
  Corpus corpus = load_corpus(config.paths.corpus);
  std::filesystem::create_directories(config.paths.output_dir);
  Vocabulary vocab = load_or_build_vocab(config, corpus);

  std::vector<TrainExample> examples = build_training_examples(corpus, vocab, config);
  if (examples.empty()) throw ValidationError("corpus produced no training contexts");

  EncoderConfig encoder = config.encoder;
  encoder.vocab_size = vocab.size();
  encoder.nli_classes = config.oracle_nli ? 2 : 3;

  Trainer trainer(ModelParams::random_init(encoder, config.train.seed), config.train);
  LossBreakdown last{};
  for (int epoch = 0; epoch < config.train.epochs; ++epoch) {
    last = trainer.run_epoch(examples);
    log_info("epoch " + std::to_string(epoch + 1) + "/" + std::to_string(config.train.epochs) +
             " loss " + std::to_string(last.total));
  }
  std::filesystem::path ckpt(config.paths.checkpoint);
  if (ckpt.has_parent_path()) std::filesystem::create_directories(ckpt.parent_path());
  trainer.params().save(config.paths.checkpoint);
  write_loss_trace(trainer.trace(),
                   (std::filesystem::path(config.paths.output_dir) / "loss_trace.csv").string());
  return last;
}

std::vector<DocumentPrediction> run_predict(const ExperimentConfig& config,
                                            const std::string& corpus_path,
                                            const std::string& out_path) {
  Corpus corpus = load_corpus(corpus_path);
  Vocabulary vocab = Vocabulary::load(config.paths.vocab);
  ModelParams params = ModelParams::load(config.paths.checkpoint);

  std::vector<DocumentPrediction> preds;
  for (const auto& doc : corpus.documents) {
    TokenizedDocument tokenized = tokenize_document(doc, vocab);
    for (const auto& hyp : corpus.hypotheses) {
      const Annotation& ann = doc.annotations.at(hyp.id);
      if (config.oracle_nli) {
        if (ann.label == NLILabel::NotMentioned) continue;
        TrainExample example = make_oracle_example(tokenized, ann, hyp, vocab);
        ContextPrediction context_pred = forward(example.input, params);
        DocumentPrediction pred;
        pred.doc_id = doc.doc_id;
        pred.hypothesis_id = hyp.id;
        pred.nli_probs = context_pred.nli_probs;
        pred.nli_label = argmax_label(pred.nli_probs);
        preds.push_back(std::move(pred));
        continue;
      }
      DocumentInference inference = predict_document(tokenized, hyp, vocab, params,
                                                     config.segmentation,
                                                     config.hypothesis_mode());
      preds.push_back(
          document_prediction(tokenized, hyp, inference, config.nli_aggregation()));
    }
  }
  if (!out_path.empty()) {
    std::filesystem::path path(out_path);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    save_predictions(preds, out_path);
  }
  return preds;
}

std::vector<DocumentPrediction> run_baseline(const std::string& kind,
                                             const std::string& train_path,
                                             const std::string& eval_path,
                                             const std::string& out_path, std::uint64_t seed,
                                             bool binary, const ExperimentConfig& config) {
  Corpus train = load_corpus(train_path);
  Corpus eval = load_corpus(eval_path);

  std::vector<DocumentPrediction> preds;
  if (kind == "majority") {
    preds = majority_vote(train, eval, binary);
  } else if (kind == "doc-tfidf") {
    preds = doc_tfidf_linear(train, eval);
  } else if (kind == "span-cosine") {
    preds = span_tfidf_cosine(train, eval);
  } else if (kind == "span-tfidf") {
    preds = span_tfidf_linear(train, eval);
  } else if (kind == "random") {
    preds = random_scores(eval, seed);
  } else if (kind == "squad") {
    Vocabulary vocab = load_or_build_vocab(config, train);
    SquadBaselineConfig squad;
    squad.encoder = config.encoder;
    squad.encoder.vocab_size = vocab.size();
    squad.train = config.train;
    ModelParams params = train_squad_baseline(train, vocab, squad);
    preds = squad_predictions(eval, vocab, params, squad.stride);
  } else {
    throw ValidationError("unknown baseline kind: \"" + kind +
                          "\" (expected majority, doc-tfidf, span-cosine, span-tfidf, random "
                          "or squad)");
  }
  if (!out_path.empty()) {
    std::filesystem::path path(out_path);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    save_predictions(preds, out_path);
  }
  return preds;
}

EvalReport run_eval(const std::string& predictions_path, const std::string& gold_path,
                    const std::string& report_path) {
  std::vector<DocumentPrediction> preds = load_predictions(predictions_path);
  Corpus gold = load_corpus(gold_path);
  EvalReport report = evaluate(preds, gold);
  if (!report_path.empty()) {
    std::filesystem::path path(report_path);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    write_file(report_path, report.to_json());
  }
  return report;
}

std::vector<std::string> inspect_contexts(const ExperimentConfig& config,
                                          const std::string& doc_id, int hypothesis_id) {
  Corpus corpus = load_corpus(config.paths.corpus);
  const Document* doc = corpus.find_document(doc_id);
  if (doc == nullptr) throw ValidationError("unknown document \"" + doc_id + "\"");
  if (hypothesis_id < 1 || hypothesis_id > static_cast<int>(corpus.hypotheses.size())) {
    throw ValidationError("unknown hypothesis " + std::to_string(hypothesis_id));
  }
  Vocabulary vocab = load_or_build_vocab(config, corpus);
  TokenizedDocument tokenized = tokenize_document(*doc, vocab);
  const Hypothesis& hyp = corpus.hypotheses[static_cast<std::size_t>(hypothesis_id - 1)];
  const Annotation& ann = doc->annotations.at(hypothesis_id);

  std::vector<std::string> lines;
  for (AssembledContext& ac : build_contexts(tokenized, hyp, vocab, config.segmentation,
                                             config.hypothesis_mode())) {
    Context ctx = align_teacher(std::move(ac.context), ann, tokenized);
    json line = json::object();
    line["context_id"] = ctx.context_id;
    line["doc_id"] = ctx.doc_id;
    line["hypothesis_id"] = hypothesis_id;
    line["token_range"] = {ctx.token_start, ctx.token_end};
    json covered = json::array();
    for (int s : ctx.covered_spans) {
      covered.push_back(tokenized.span_ids[static_cast<std::size_t>(s)]);
    }
    line["covered_spans"] = std::move(covered);
    line["teacher"] = {{"span_labels", ctx.teacher.span_labels},
                       {"label", to_string(ann.label)},
                       {"has_evidence", ctx.teacher.has_evidence}};
    lines.push_back(line.dump());
  }
  return lines;
}

namespace {

void apply_axis(ExperimentConfig& config, const std::string& axis, const json& value) {
  if (axis == "lambda") {
    config.train.lambda = value.get<double>();
  } else if (axis == "learning_rate") {
    config.train.learning_rate = value.get<double>();
  } else if (axis == "batch_size") {
    config.train.batch_size = value.get<int>();
  } else if (axis == "epochs") {
    config.train.epochs = value.get<int>();
  } else if (axis == "warmup_steps") {
    config.train.warmup_steps = value.get<int>();
  } else if (axis == "weight_decay") {
    config.train.weight_decay = value.get<double>();
  } else if (axis == "min_surrounding_tokens") {
    config.segmentation.min_surrounding_tokens = value.get<int>();
  } else if (axis == "weighted_nli") {
    config.train.use_weighted_nli = value.get<bool>();
  } else if (axis == "seed") {
    config.seed = value.get<std::uint64_t>();
    config.train.seed = config.seed;
  } else {
    throw ValidationError("unknown grid axis \"" + axis + "\"");
  }
}

}  // namespace

std::vector<GridRun> run_grid(const ExperimentConfig& base, const std::string& grid_path) {
  if (base.paths.dev_corpus.empty()) {
    throw ValidationError("grid search requires paths.dev_corpus in the config");
  }
  json grid;
  try {
    grid = json::parse(read_file(grid_path));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed grid file: ") + e.what());
  }
  if (!grid.is_object() || grid.empty()) {
    throw ValidationError("grid file must be an object of axis -> value arrays");
  }

  std::vector<std::string> axes;
  std::vector<std::vector<json>> values;
  for (const auto& [axis, list] : grid.items()) {
    if (!list.is_array() || list.empty()) {
      throw ValidationError("grid axis \"" + axis + "\" must be a non-empty array");
    }
    axes.push_back(axis);
    values.push_back(std::vector<json>(list.begin(), list.end()));
  }

  std::vector<GridRun> runs;
  std::vector<std::size_t> index(axes.size(), 0);
  for (int run_id = 0;; ++run_id) {
    ExperimentConfig config = base;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      apply_axis(config, axes[a], values[a][index[a]]);
    }
    std::filesystem::path out(base.paths.output_dir);
    config.paths.checkpoint = (out / ("grid_" + std::to_string(run_id) + ".ckpt")).string();

    run_train(config);
    std::string dev_dump = (out / ("grid_" + std::to_string(run_id) + "_dev.jsonl")).string();
    std::vector<DocumentPrediction> preds =
        run_predict(config, config.paths.dev_corpus, dev_dump);
    Corpus dev = load_corpus(config.paths.dev_corpus);
    EvalReport report = evaluate(preds, dev);

    GridRun run;
    run.config = config;
    run.dev_nli_accuracy = std::isnan(report.nli_accuracy) ? 0.0 : report.nli_accuracy;
    run.dev_map = std::isnan(report.map) ? 0.0 : report.map;
    runs.push_back(std::move(run));
    log_info("grid run " + std::to_string(run_id) + " dev accuracy " +
             std::to_string(runs.back().dev_nli_accuracy));

    std::size_t a = 0;
    while (a < axes.size()) {
      if (++index[a] < values[a].size()) break;
      index[a] = 0;
      ++a;
    }
    if (a == axes.size()) break;
  }
  std::stable_sort(runs.begin(), runs.end(), [](const GridRun& x, const GridRun& y) {
    return x.dev_nli_accuracy > y.dev_nli_accuracy;
  });
  return runs;
}

std::string grid_summary(const std::vector<GridRun>& runs) {
  std::size_t top = std::min<std::size_t>(3, runs.size());
  double mean_acc = 0, mean_map = 0;
  for (std::size_t i = 0; i < top; ++i) {
    mean_acc += runs[i].dev_nli_accuracy;
    mean_map += runs[i].dev_map;
  }
  mean_acc /= static_cast<double>(top);
  mean_map /= static_cast<double>(top);
  double var_acc = 0, var_map = 0;
  for (std::size_t i = 0; i < top; ++i) {
    var_acc += (runs[i].dev_nli_accuracy - mean_acc) * (runs[i].dev_nli_accuracy - mean_acc);
    var_map += (runs[i].dev_map - mean_map) * (runs[i].dev_map - mean_map);
  }
  var_acc /= static_cast<double>(top);
  var_map /= static_cast<double>(top);

  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  out << "grid: " << runs.size() << " runs, best " << top << " by dev NLI accuracy\n";
  for (std::size_t i = 0; i < top; ++i) {
    out << "  #" << (i + 1) << " accuracy " << runs[i].dev_nli_accuracy << " mAP "
        << runs[i].dev_map << " (lambda " << runs[i].config.train.lambda << ", lr "
        << runs[i].config.train.learning_rate << ", n "
        << runs[i].config.segmentation.min_surrounding_tokens << ", weighted "
        << (runs[i].config.train.use_weighted_nli ? "yes" : "no") << ")\n";
  }
  out << "  mean accuracy " << mean_acc << " (std " << std::sqrt(var_acc) << "), mean mAP "
      << mean_map << " (std " << std::sqrt(var_map) << ")\n";
  return out.str();
}

}  // namespace docnli
