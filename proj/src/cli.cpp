#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>

#include "prnmt/checkpoint.hpp"
#include "prnmt/config.hpp"
#include "prnmt/eval.hpp"
#include "prnmt/rng.hpp"

namespace prnmt {

namespace fs = std::filesystem;
using nlohmann::json;

#define PRNMT_CONFIG_FIELDS(X)                                                                          \
    X(output_dir) X(train_src) X(train_tgt) X(input) X(hypotheses) X(references) X(src_vocab)         \
    X(tgt_vocab) X(checkpoint) X(gamma) X(dictionary) X(phrase_table) X(max_vocab)                     \
    X(max_sentence_length) X(embed_dim) X(hidden_dim) X(attention_dim) X(readout_dim)                  \
    X(adadelta_decay) X(adadelta_epsilon) X(mle_iterations) X(mle_batch_size) X(mle_gradient_scale)     \
    X(mle_log_every) X(pr_iterations) X(lambda1) X(lambda2) X(alpha) X(sample_size) X(pr_batch_size)   \
    X(gamma_step_size) X(include_reference_in_samples) X(sample_max_len) X(pr_log_every) X(beta)       \
    X(cp_epsilon) X(use_dictionary) X(use_phrases) X(use_coverage) X(use_length_ratio)                 \
    X(dict_min_prob) X(phrase_min_prob) X(phrase_min_count) X(max_phrase_len) X(beam_size) X(max_len) \
    X(cp_weight) X(cp_during_pruning) X(lowercase)

json config_to_json(const ExperimentConfig& config) {
    json j;
    j["seed"] = config.seed ? json(*config.seed) : json(nullptr);
#define PRNMT_TO_JSON(name) j[#name] = config.name;
    PRNMT_CONFIG_FIELDS(PRNMT_TO_JSON)
#undef PRNMT_TO_JSON
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) {
        throw std::invalid_argument("configuration must be a JSON object");
    }
    const json defaults = config_to_json(ExperimentConfig{});
    for (const auto& [key, value] : j.items()) {
        if (!defaults.contains(key)) {
            throw std::invalid_argument("unknown configuration key '" + key + "'");
        }
    }
    ExperimentConfig config;
    try {
        if (j.contains("seed") && !j.at("seed").is_null()) {
            const json& s = j.at("seed");
            if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
                throw std::invalid_argument("seed must be a non-negative integer");
            }
            config.seed = s.get<std::uint64_t>();
        }
#define PRNMT_FROM_JSON(name)                                                                         \
    if (j.contains(#name)) {                                                                          \
        const json& v = j.at(#name);                                                                  \
        const json& d = defaults.at(#name);                                                           \
        const bool ok = (d.is_boolean() && v.is_boolean()) || (d.is_string() && v.is_string()) ||     \
                        (d.is_array() && v.is_array()) ||                                             \
                        (d.is_number_float() && v.is_number()) ||                                     \
                        (d.is_number_unsigned() && (v.is_number_unsigned() ||                         \
                                                    (v.is_number_integer() && v.get<std::int64_t>() >= 0))); \
        if (!ok) {                                                                                    \
            throw std::invalid_argument("configuration key '" #name "' has the wrong type");          \
        }                                                                                             \
        v.get_to(config.name);                                                                        \
    }
        PRNMT_CONFIG_FIELDS(PRNMT_FROM_JSON)
#undef PRNMT_FROM_JSON
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("bad configuration: ") + e.what());
    }
    return config;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::invalid_argument("cannot read config " + path);
    }
    try {
        return config_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

ModelConfig ExperimentConfig::model_config(std::size_t src_vocab_size, std::size_t tgt_vocab_size) const {
    ModelConfig m;
    m.src_vocab = src_vocab_size;
    m.tgt_vocab = tgt_vocab_size;
    m.embed_dim = embed_dim;
    m.hidden_dim = hidden_dim;
    m.attention_dim = attention_dim;
    m.readout_dim = readout_dim;
    return m;
}

MleConfig ExperimentConfig::mle_config() const {
    MleConfig m;
    m.batch_size = mle_batch_size;
    m.iterations = mle_iterations;
    m.seed = seed.value_or(0);
    m.optimizer = {adadelta_decay, adadelta_epsilon};
    m.gradient_scale = mle_gradient_scale;
    m.log_every = mle_log_every;
    return m;
}

PRConfig ExperimentConfig::pr_config() const {
    PRConfig p;
    p.lambda1 = lambda1;
    p.lambda2 = lambda2;
    p.alpha = alpha;
    p.sample_size = sample_size;
    p.batch_size = pr_batch_size;
    p.theta_optimizer = {adadelta_decay, adadelta_epsilon};
    p.gamma_step_size = gamma_step_size;
    p.iterations = pr_iterations;
    p.seed = seed.value_or(0);
    p.include_reference_in_samples = include_reference_in_samples;
    p.sample_max_len = sample_max_len;
    p.log_every = pr_log_every;
    return p;
}

FeatureConfig ExperimentConfig::feature_config() const {
    FeatureConfig f;
    f.beta = beta;
    f.cp_epsilon = cp_epsilon;
    f.use_dictionary = use_dictionary;
    f.use_phrases = use_phrases;
    f.use_coverage = use_coverage;
    f.use_length_ratio = use_length_ratio;
    return f;
}

ResourceThresholds ExperimentConfig::thresholds() const {
    return {dict_min_prob, phrase_min_prob, phrase_min_count, max_phrase_len};
}

CoverageDecodeOptions ExperimentConfig::coverage_options() const {
    return {cp_weight, cp_epsilon, cp_during_pruning};
}

namespace {

void require_file(const std::string& key, const std::string& path) {
    if (path.empty()) {
        throw std::invalid_argument("'" + key + "' is required for this command");
    }
    if (!fs::is_regular_file(path)) {
        throw std::invalid_argument("'" + key + "' does not exist: " + path);
    }
}

void optional_file(const std::string& key, const std::string& path) {
    if (!path.empty() && !fs::is_regular_file(path)) {
        throw std::invalid_argument("'" + key + "' does not exist: " + path);
    }
}

}  // namespace

void ExperimentConfig::validate(const std::string& command) const {
    const auto& commands = cli_commands();
    if (std::find(commands.begin(), commands.end(), command) == commands.end()) {
        throw std::invalid_argument("unknown command '" + command + "'");
    }
    if (!seed) {
        throw std::invalid_argument("'seed' is required");
    }
    if (output_dir.empty()) {
        throw std::invalid_argument("'output_dir' is required");
    }
    if (max_sentence_length == 0) {
        throw std::invalid_argument("max_sentence_length must be at least 1");
    }
    feature_config().validate();
    if (command == "extract-resources" || command == "train-mle" || command == "train-pr") {
        require_file("train_src", train_src);
        require_file("train_tgt", train_tgt);
        optional_file("src_vocab", src_vocab);
        optional_file("tgt_vocab", tgt_vocab);
        if (src_vocab.empty() != tgt_vocab.empty()) {
            throw std::invalid_argument("give both src_vocab and tgt_vocab or neither");
        }
        if (max_vocab <= kNumSpecials) {
            throw std::invalid_argument("max_vocab must exceed the number of special tokens");
        }
        if (max_phrase_len == 0) {
            throw std::invalid_argument("max_phrase_len must be at least 1");
        }
    }
    if (command == "train-mle") {
        model_config(1, kNumSpecials + 1).validate();
        mle_config().validate();
    }
    if (command == "train-pr") {
        model_config(1, kNumSpecials + 1).validate();
        pr_config().validate();
        optional_file("checkpoint", checkpoint);
        optional_file("gamma", gamma);
        optional_file("dictionary", dictionary);
        optional_file("phrase_table", phrase_table);
        if (!checkpoint.empty() && src_vocab.empty()) {
            throw std::invalid_argument("a warm-start checkpoint needs src_vocab and tgt_vocab");
        }
    }
    if (command == "decode" || command == "rerank") {
        require_file("checkpoint", checkpoint);
        require_file("src_vocab", src_vocab);
        require_file("tgt_vocab", tgt_vocab);
        require_file("input", input);
        if (beam_size == 0) {
            throw std::invalid_argument("beam_size must be at least 1");
        }
        if (!(cp_weight >= 0.0)) {
            throw std::invalid_argument("cp_weight must be non-negative");
        }
    }
    if (command == "rerank") {
        require_file("gamma", gamma);
        optional_file("dictionary", dictionary);
        optional_file("phrase_table", phrase_table);
    }
    if (command == "eval") {
        require_file("hypotheses", hypotheses);
        if (references.empty()) {
            throw std::invalid_argument("'references' needs at least one file");
        }
        for (const auto& r : references) {
            require_file("references", r);
        }
    }
}

namespace {

struct Vocabs {
    Vocabulary src;
    Vocabulary tgt;
};

Vocabs vocabs_for_training(const ExperimentConfig& c, const RawCorpus& corpus) {
    Vocabs v;
    if (!c.src_vocab.empty()) {
        v.src = Vocabulary::load(c.src_vocab);
        v.tgt = Vocabulary::load(c.tgt_vocab);
    } else {
        v.src = build_vocab(corpus, Side::kSource, c.max_vocab);
        v.tgt = build_vocab(corpus, Side::kTarget, c.max_vocab);
    }
    v.src.save((fs::path(c.output_dir) / "src.vocab").string());
    v.tgt.save((fs::path(c.output_dir) / "tgt.vocab").string());
    return v;
}

void check_compatible(const ModelParams& params, const Vocabs& v) {
    if (params.config.src_vocab != v.src.size() || params.config.tgt_vocab != v.tgt.size()) {
        throw std::invalid_argument("checkpoint vocabulary sizes do not match the vocabulary files");
    }
}

KnowledgeResources load_resources(const ExperimentConfig& c, const Vocabs& v) {
    Dictionary dict;
    PhraseTable phrases;
    if (!c.dictionary.empty()) {
        dict = load_dictionary(c.dictionary, v.src, v.tgt, c.thresholds());
    }
    if (!c.phrase_table.empty()) {
        phrases = load_phrase_table(c.phrase_table, v.src, v.tgt, c.thresholds());
    }
    return KnowledgeResources(std::move(dict), std::move(phrases));
}

std::string out_path(const ExperimentConfig& c, const std::string& name) {
    return (fs::path(c.output_dir) / name).string();
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    for (const auto& l : lines) {
        out << l << '\n';
    }
}

std::size_t decode_max_len(const ExperimentConfig& c, std::size_t source_len) {
    return c.max_len > 0 ? c.max_len : default_max_len(source_len);
}

void extract_command(const ExperimentConfig& c) {
    const RawCorpus corpus = load_parallel_corpus(c.train_src, c.train_tgt, c.max_sentence_length);
    const Vocabs v = vocabs_for_training(c, corpus);
    const KnowledgeResources res = extract_resources(corpus, v.src, v.tgt, c.thresholds());
    save_dictionary(out_path(c, "dictionary.tsv"), res.dictionary(), v.src, v.tgt);
    save_phrase_table(out_path(c, "phrases.tsv"), res.phrases(), v.src, v.tgt);
    std::clog << "extracted " << res.dictionary().entries.size() << " dictionary entries and "
              << res.phrases().entries.size() << " phrase pairs\n";
}

void train_mle_command(const ExperimentConfig& c) {
    const RawCorpus raw = load_parallel_corpus(c.train_src, c.train_tgt, c.max_sentence_length);
    const Vocabs v = vocabs_for_training(c, raw);
    const auto corpus = encode_corpus(raw, v.src, v.tgt);
    ModelParams params = init_params(c.model_config(v.src.size(), v.tgt.size()), {derive_seed(*c.seed, "init")});
    MleResult result = train_mle(c.mle_config(), corpus, std::move(params));
    save_checkpoint(out_path(c, "model.ckpt"), result.params);
    write_trace(out_path(c, "mle_trace.tsv"), result.trace);
    if (!result.trace.empty()) {
        std::clog << "final mean log-likelihood " << result.trace.back().mean_log_likelihood << '\n';
    }
}

void train_pr_command(const ExperimentConfig& c) {
    const RawCorpus raw = load_parallel_corpus(c.train_src, c.train_tgt, c.max_sentence_length);
    const Vocabs v = vocabs_for_training(c, raw);
    const auto corpus = encode_corpus(raw, v.src, v.tgt);
    ModelParams params;
    if (!c.checkpoint.empty()) {
        params = load_checkpoint(c.checkpoint);
        check_compatible(params, v);
    } else {
        params = init_params(c.model_config(v.src.size(), v.tgt.size()), {derive_seed(*c.seed, "init")});
    }
    const KnowledgeResources res = load_resources(c, v);
    FeatureWeights gamma;
    if (!c.gamma.empty()) {
        gamma = load_weights(c.gamma, res, v.src, v.tgt);
    }
    PRResult result = train_posreg(c.pr_config(), corpus, res, c.feature_config(), std::move(params),
                                   std::move(gamma));
    save_checkpoint(out_path(c, "model.ckpt"), result.params);
    save_weights(out_path(c, "gamma.tsv"), result.gamma, res, v.src, v.tgt);
    write_trace(out_path(c, "pr_trace.tsv"), result.trace);
}

struct DecodeInputs {
    Vocabs vocabs;
    ModelParams params;
    std::vector<TokenIds> sources;
};

DecodeInputs load_decode_inputs(const ExperimentConfig& c) {
    DecodeInputs d;
    d.vocabs.src = Vocabulary::load(c.src_vocab);
    d.vocabs.tgt = Vocabulary::load(c.tgt_vocab);
    d.params = load_checkpoint(c.checkpoint);
    check_compatible(d.params, d.vocabs);
    for (const auto& s : load_sentences(c.input)) {
        d.sources.push_back(encode_tokens(d.vocabs.src, s));
    }
    return d;
}

void decode_command(const ExperimentConfig& c) {
    const DecodeInputs d = load_decode_inputs(c);
    std::vector<std::string> lines;
    std::ofstream kbest(out_path(c, "kbest.txt"));
    for (std::size_t s = 0; s < d.sources.size(); ++s) {
        const auto& src = d.sources[s];
        if (src.empty()) {
            lines.emplace_back();
            continue;
        }
        const std::size_t max_len = decode_max_len(c, src.size());
        PruningScore pruning;
        if (c.cp_weight > 0.0 && c.cp_during_pruning) {
            pruning = [&](const Hypothesis& h) { return coverage_score(h, c.cp_weight, c.cp_epsilon); };
        }
        const auto finished = beam_search(d.params, src, c.beam_size, max_len, pruning);
        std::vector<CandidateScore> scores;
        for (const auto& h : finished) {
            scores.push_back({h.log_prob, 0.0, h.log_prob});
        }
        write_kbest(kbest, s, finished, scores, d.vocabs.tgt);
        const Hypothesis best = c.cp_weight > 0.0 ? select_with_coverage(finished, c.cp_weight, c.cp_epsilon)
                                                  : finished.front();
        lines.push_back(join_tokens(d.vocabs.tgt.decode(best.words())));
    }
    write_lines(out_path(c, "translations.txt"), lines);
}

void rerank_command(const ExperimentConfig& c) {
    const DecodeInputs d = load_decode_inputs(c);
    const KnowledgeResources res = load_resources(c, d.vocabs);
    const FeatureWeights gamma = load_weights(c.gamma, res, d.vocabs.src, d.vocabs.tgt);
    const FeatureConfig fc = c.feature_config();
    std::vector<std::string> lines;
    std::ofstream kbest(out_path(c, "kbest_reranked.txt"));
    for (std::size_t s = 0; s < d.sources.size(); ++s) {
        const auto& src = d.sources[s];
        if (src.empty()) {
            lines.emplace_back();
            continue;
        }
        const auto finished = beam_search(d.params, src, c.beam_size, decode_max_len(c, src.size()));
        const RerankedResult r = rerank(finished, src, gamma, res, fc);
        write_kbest(kbest, s, finished, r.breakdown, d.vocabs.tgt);
        lines.push_back(join_tokens(d.vocabs.tgt.decode(r.chosen.words())));
    }
    write_lines(out_path(c, "reranked.txt"), lines);
}

void eval_command(const ExperimentConfig& c) {
    const auto hyps = load_sentences(c.hypotheses);
    std::vector<std::vector<Sentence>> refs(hyps.size());
    for (const auto& path : c.references) {
        const auto r = load_sentences(path);
        if (r.size() != hyps.size()) {
            throw std::invalid_argument(path + " has " + std::to_string(r.size()) + " lines, expected " +
                                        std::to_string(hyps.size()));
        }
        for (std::size_t s = 0; s < r.size(); ++s) {
            refs[s].push_back(r[s]);
        }
    }
    const std::string line = format_bleu(bleu_score(hyps, refs, 4, c.lowercase));
    std::cout << line << '\n';
    write_lines(out_path(c, "bleu.txt"), {line});
}

}  // namespace

int run_command(const std::string& command, const ExperimentConfig& config) {
    try {
        config.validate(command);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    try {
        fs::create_directories(config.output_dir);
        {
            std::ofstream snap(out_path(config, command + ".config.json"));
            snap << config_to_json(config).dump(2) << '\n';
        }
        if (command == "extract-resources") {
            extract_command(config);
        } else if (command == "train-mle") {
            train_mle_command(config);
        } else if (command == "train-pr") {
            train_pr_command(config);
        } else if (command == "decode") {
            decode_command(config);
        } else if (command == "rerank") {
            rerank_command(config);
        } else {
            eval_command(config);
        }
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return kExitOk;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Attention NMT with posterior regularization"};
    std::string command;
    std::string config_path;
    app.add_option("command", command, "Command to run")->required()->check(CLI::IsMember(cli_commands()));
    app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);

    const json defaults = config_to_json(ExperimentConfig{});
    std::map<std::string, std::string> scalars;
    std::map<std::string, std::vector<std::string>> lists;
    std::map<std::string, CLI::Option*> options;
    for (const auto& [key, value] : defaults.items()) {
        if (value.is_array()) {
            options[key] = app.add_option("--" + key, lists[key]);
        } else {
            options[key] = app.add_option("--" + key, scalars[key]);
        }
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitValidation;
    }

    ExperimentConfig config;
    try {
        json j = config_path.empty() ? json::object() : [&] {
            std::ifstream in(config_path);
            return json::parse(in);
        }();
        for (const auto& [key, opt] : options) {
            if (opt->count() == 0) {
                continue;
            }
            const json& d = defaults.at(key);
            if (d.is_array()) {
                j[key] = lists[key];
            } else if (d.is_string()) {
                j[key] = scalars[key];
            } else {
                try {
                    j[key] = json::parse(scalars[key]);
                } catch (const json::parse_error&) {
                    throw std::invalid_argument("--" + key + ": cannot parse '" + scalars[key] + "'");
                }
            }
        }
        config = config_from_json(j);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return run_command(command, config);
}

}  // namespace prnmt
