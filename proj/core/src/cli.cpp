#include "aes/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "aes/config_file.hpp"
#include "aes/data.hpp"
#include "aes/error.hpp"
#include "aes/evaluation.hpp"
#include "aes/model_io.hpp"
#include "aes/scoring.hpp"
#include "aes/tokenizer.hpp"

namespace aes {

namespace {

ScoreScale parse_scale(const std::string& text) {
    const std::size_t colon = text.find(':');
    if (colon == std::string::npos) {
        throw UsageError("--scale expects MIN:MAX, got '" + text + "'");
    }
    try {
        ScoreScale s{std::stoi(text.substr(0, colon)), std::stoi(text.substr(colon + 1))};
        s.validate();
        return s;
    } catch (const std::exception&) {
        throw UsageError("--scale expects MIN:MAX with MAX > MIN, got '" + text + "'");
    }
}

std::string format_report(const std::vector<std::pair<std::string, AgreementReport>>& rows,
                          bool with_avg) {
    std::ostringstream os;
    os << "fold\tqwk\tsmd\tacc\tn\n";
    char buf[64];
    double qwk_sum = 0, smd_sum = 0, acc_sum = 0;
    std::size_t n_sum = 0;
    for (const auto& [label, r] : rows) {
        std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t%.6f", r.qwk, r.smd, r.acc);
        os << label << '\t' << buf << '\t' << r.n << '\n';
        qwk_sum += r.qwk;
        smd_sum += r.smd;
        acc_sum += r.acc;
        n_sum += r.n;
    }
    if (with_avg && !rows.empty()) {
        const double k = static_cast<double>(rows.size());
        std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t%.6f", qwk_sum / k, smd_sum / k, acc_sum / k);
        os << "AVG\t" << buf << '\t' << n_sum << '\n';
    }
    return os.str();
}

void report_rejects(const IngestResult& ingested, std::ostream& err) {
    for (const std::string& line : ingested.rejected) err << "rejected " << line << "\n";
}

std::vector<std::string> corpus_from_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw FormatError("tok train: " + dir + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<std::string> docs;
    for (const auto& path : files) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw FormatError("tok train: cannot open " + path.string());
        std::string line;
        while (std::getline(f, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) docs.push_back(line);
        }
    }
    return docs;
}

ModelConfig config_for_vocab(ModelConfig config, const Vocabulary& vocab) {
    // The live vocabulary decides the embedding row count.
    config.vocab_size = vocab.size();
    return config;
}

struct CommonArgs {
    std::string data, vocab, config, model, out, folds, corpus, scale, gold;
    std::vector<std::string> preds;
    int prompt = 0;
    std::size_t size = 0;
    std::size_t max_len = 0;
    std::uint64_t seed = 0;
};

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
             std::istream& in) {
    CLI::App app{"Essay-scoring toolkit: subword tokenizer, desk-scale efficient "
                 "transformer variants, regression-as-classification scoring, and "
                 "rater-agreement statistics."};
    app.name("aes");
    app.require_subcommand(1);
    CommonArgs a;

    // tok train / tok encode
    CLI::App* tok = app.add_subcommand("tok", "Train or apply the BPE tokenizer");
    tok->require_subcommand(1);
    CLI::App* tok_train = tok->add_subcommand("train", "Train a BPE vocabulary");
    tok_train->add_option("--corpus", a.corpus, "Directory of text files (one doc per line)")
        ->required();
    tok_train->add_option("--size", a.size, "Target vocabulary size")->required();
    tok_train->add_option("--out", a.out, "Output vocabulary file")->required();
    tok_train->add_option("--seed", a.seed, "Training seed (kept for reproducibility records)");
    CLI::App* tok_encode = tok->add_subcommand("encode", "Encode stdin to token ids");
    tok_encode->add_option("--vocab", a.vocab, "Vocabulary file")->required();
    tok_encode->add_option("--max-len", a.max_len, "Maximum sequence length");

    CLI::App* train_cmd = app.add_subcommand("train", "Fine-tune a model on one prompt");
    train_cmd->add_option("--data", a.data, "Essay TSV")->required();
    train_cmd->add_option("--prompt", a.prompt, "Prompt id 1..8")->required();
    train_cmd->add_option("--vocab", a.vocab, "Vocabulary file")->required();
    train_cmd->add_option("--config", a.config, "Model/training config file")->required();
    train_cmd->add_option("--out", a.out, "Output model file")->required();

    CLI::App* predict_cmd = app.add_subcommand("predict", "Score essays with a trained model");
    predict_cmd->add_option("--model", a.model, "Model file")->required();
    predict_cmd->add_option("--vocab", a.vocab, "Vocabulary file")->required();
    predict_cmd->add_option("--data", a.data, "Essay TSV")->required();
    predict_cmd->add_option("--prompt", a.prompt, "Prompt id 1..8")->required();
    predict_cmd->add_option("--out", a.out, "Output prediction TSV")->required();

    CLI::App* ensemble_cmd = app.add_subcommand("ensemble", "Average prediction files");
    ensemble_cmd->add_option("--pred", a.preds, "Prediction TSV (repeatable)")->required();
    ensemble_cmd->add_option("--scale", a.scale, "Score range MIN:MAX")->required();
    ensemble_cmd->add_option("--out", a.out, "Output prediction TSV")->required();

    CLI::App* eval_cmd = app.add_subcommand("eval", "Agreement between predictions and gold");
    eval_cmd->add_option("--pred", a.preds, "Prediction TSV")->required()->expected(1);
    eval_cmd->add_option("--gold", a.gold, "Gold TSV (score or resolved column)")->required();
    eval_cmd->add_option("--scale", a.scale, "Score range MIN:MAX")->required();
    eval_cmd->add_option("--out", a.out, "Write the report here instead of stdout");

    CLI::App* kfold_cmd = app.add_subcommand("kfold", "5-fold cross-validated training");
    kfold_cmd->add_option("--data", a.data, "Essay TSV")->required();
    kfold_cmd->add_option("--prompt", a.prompt, "Prompt id 1..8")->required();
    kfold_cmd->add_option("--folds", a.folds, "Fold assignment TSV")->required();
    kfold_cmd->add_option("--vocab", a.vocab, "Vocabulary file")->required();
    kfold_cmd->add_option("--config", a.config, "Model/training config file")->required();
    kfold_cmd->add_option("--out", a.out, "Output report TSV")->required();

    CLI::App* params_cmd = app.add_subcommand("params", "Count trainable parameters");
    params_cmd->add_option("--config", a.config, "Model config file")->required();

    CLI::App* agree_cmd =
        app.add_subcommand("agree-human", "Rater1-vs-rater2 agreement per prompt");
    agree_cmd->add_option("--data", a.data, "Essay TSV")->required();
    agree_cmd->add_option("--out", a.out, "Write the report here instead of stdout");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    const PromptCatalog catalog = asap_catalog();

    if (tok_train->parsed()) {
        const std::vector<std::string> docs = corpus_from_dir(a.corpus);
        const Vocabulary vocab = train_bpe(docs, a.size, a.seed);
        save_vocabulary(vocab, a.out);
        out << "vocabulary " << vocab.size() << " tokens, " << vocab.merges.size()
            << " merges -> " << a.out << "\n";
        return 0;
    }
    if (tok_encode->parsed()) {
        const Vocabulary vocab = load_vocabulary(a.vocab);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const std::size_t max_len = a.max_len == 0 ? text.size() + 1 : a.max_len;
        const std::vector<int> ids = encode(text, vocab, max_len);
        for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? " " : "") << ids[i];
        out << "\n";
        return 0;
    }
    if (train_cmd->parsed()) {
        const RunConfig cfg = load_run_config(a.config);
        const Vocabulary vocab = load_vocabulary(a.vocab);
        const IngestResult ingested = ingest(a.data, a.prompt, catalog);
        report_rejects(ingested, err);
        const ScoreScale scale = catalog.prompt(a.prompt).resolved_range;
        const ScoringModel init =
            build_scoring_model(config_for_vocab(cfg.model, vocab), cfg.train.rng_seed);
        TrainResult result = train_with_split(init, vocab, ingested.records, scale, cfg.train);
        save_scoring_model(a.out, result.model);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%g", result.best_learning_rate);
        out << "selected lr=" << buf << " batch=" << result.best_batch_size;
        std::snprintf(buf, sizeof buf, "%.6f", result.best_dev_qwk);
        out << " dev_qwk=" << buf << "\n";
        return 0;
    }
    if (predict_cmd->parsed()) {
        const ScoringModel model = load_scoring_model(a.model);
        const Vocabulary vocab = load_vocabulary(a.vocab);
        const IngestResult ingested = ingest(a.data, a.prompt, catalog);
        report_rejects(ingested, err);
        const ScoreScale scale = catalog.prompt(a.prompt).resolved_range;
        std::vector<PredictionRow> rows;
        for (const Prediction& p : predict(model, vocab, ingested.records, scale)) {
            rows.push_back({p.essay_id, p.raw, p.score});
        }
        write_predictions(a.out, rows);
        return 0;
    }
    if (ensemble_cmd->parsed()) {
        const ScoreScale scale = parse_scale(a.scale);
        std::map<long long, std::vector<double>> raws;  // ordered for stable output
        for (const std::string& path : a.preds) {
            for (const PredictionRow& row : read_predictions(path)) {
                raws[row.essay_id].push_back(row.raw);
            }
        }
        if (raws.empty()) throw DataError("ensemble: no predictions found");
        const std::size_t expected = raws.begin()->second.size();
        std::vector<PredictionRow> rows;
        for (const auto& [id, values] : raws) {
            if (values.size() != expected) {
                throw DataError("ensemble: essay_id " + std::to_string(id) +
                                " is missing from some prediction files");
            }
            const Prediction p = ensemble(id, values, scale);
            rows.push_back({p.essay_id, p.raw, p.score});
        }
        write_predictions(a.out, rows);
        return 0;
    }
    if (eval_cmd->parsed()) {
        const ScoreScale scale = parse_scale(a.scale);
        const std::vector<PredictionRow> preds = read_predictions(a.preds.at(0));
        const std::unordered_map<long long, int> gold = read_score_column(a.gold);
        std::vector<int> p, g;
        for (const PredictionRow& row : preds) {
            auto it = gold.find(row.essay_id);
            if (it == gold.end()) {
                throw DataError("eval: essay_id " + std::to_string(row.essay_id) +
                                " missing from gold file");
            }
            p.push_back(row.score);
            g.push_back(it->second);
        }
        const AgreementReport report = agreement(p, g, scale);
        const std::string text = format_report({{"ALL", report}}, false);
        if (a.out.empty()) {
            out << text;
        } else {
            write_file_atomic(a.out, text);
        }
        return 0;
    }
    if (kfold_cmd->parsed()) {
        const RunConfig cfg = load_run_config(a.config);
        const Vocabulary vocab = load_vocabulary(a.vocab);
        const IngestResult ingested = ingest(a.data, a.prompt, catalog);
        report_rejects(ingested, err);
        const ScoreScale scale = catalog.prompt(a.prompt).resolved_range;
        FoldSplit split;
        split.fold_of = read_folds(a.folds);
        const ScoringModel init =
            build_scoring_model(config_for_vocab(cfg.model, vocab), cfg.train.rng_seed);
        const Trainer trainer = [&](const std::vector<EssayRecord>& tr,
                                    const std::vector<EssayRecord>& dev) -> Predictor {
            TrainResult res = train(init, vocab, tr, dev, scale, cfg.train);
            auto model = std::make_shared<ScoringModel>(std::move(res.model));
            return [model, &vocab, scale](const std::vector<EssayRecord>& test) {
                std::vector<int> scores;
                for (const Prediction& p : predict(*model, vocab, test, scale)) {
                    scores.push_back(p.score);
                }
                return scores;
            };
        };
        const KfoldResult result =
            kfold_evaluate(ingested.records, split, trainer, scale, cfg.train.rng_seed);
        std::vector<std::pair<std::string, AgreementReport>> rows;
        for (std::size_t f = 0; f < result.folds.size(); ++f) {
            rows.emplace_back(std::to_string(f), result.folds[f]);
        }
        write_file_atomic(a.out, format_report(rows, true));
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", result.average_qwk);
        out << "average qwk " << buf << "\n";
        return 0;
    }
    if (params_cmd->parsed()) {
        const RunConfig cfg = load_run_config(a.config);
        out << count_parameters(cfg.model) << "\n";
        return 0;
    }
    if (agree_cmd->parsed()) {
        std::vector<std::pair<std::string, AgreementReport>> rows;
        for (int prompt = 1; prompt <= 8; ++prompt) {
            const IngestResult ingested = ingest(a.data, prompt, catalog);
            report_rejects(ingested, err);
            if (ingested.records.empty()) continue;
            std::vector<int> r1, r2;
            for (const EssayRecord& rec : ingested.records) {
                r1.push_back(rec.rater1);
                r2.push_back(rec.rater2);
            }
            rows.emplace_back(std::to_string(prompt),
                              agreement(r1, r2, catalog.prompt(prompt).rater_range));
        }
        std::ostringstream text;
        text << "prompt\tqwk\tsmd\tacc\tn\n";
        char buf[64];
        for (const auto& [label, r] : rows) {
            std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t%.6f", r.qwk, r.smd, r.acc);
            text << label << '\t' << buf << '\t' << r.n << '\n';
        }
        if (a.out.empty()) {
            out << text.str();
        } else {
            write_file_atomic(a.out, text.str());
        }
        return 0;
    }
    throw UsageError("no subcommand given");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            std::istream& in) {
    try {
        return dispatch(args, out, err, in);
    } catch (const Error& e) {
        err << "error: " << e.category_name() << ": " << e.what() << "\n";
        return static_cast<int>(e.category());
    } catch (const std::exception& e) {
        err << "error: internal: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace aes
