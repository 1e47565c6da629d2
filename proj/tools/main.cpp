// signlang: command-line entry point for the sign-sequence recognition engine.
//
// Exit codes: 0 success, 1 usage error, 2 data or model error.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <pthread.h>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "signlang/dataset.hpp"
#include "signlang/error.hpp"
#include "signlang/model_io.hpp"
#include "signlang/nn.hpp"
#include "signlang/realtime.hpp"
#include "signlang/server.hpp"
#include "signlang/session.hpp"
#include "signlang/trainer.hpp"

namespace fs = std::filesystem;
using namespace signlang;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

/// Raised for flag combinations CLI11 cannot express.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::size_t> parse_sizes(const std::string& text, const char* flag) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const auto v = std::stoul(item, &used);
            if (used != item.size() || v == 0) {
                throw std::invalid_argument(item);
            }
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError(std::string(flag) + ": expected comma-separated positive integers");
        }
    }
    return out;
}

std::vector<std::string> split_labels(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(item);
    }
    return out;
}

std::string join(const std::vector<std::size_t>& values) {
    std::string out;
    for (std::size_t k = 0; k < values.size(); ++k) {
        out += (k ? "," : "") + std::to_string(values[k]);
    }
    return out;
}

void check_model_matches(const Model& model, const DatasetManifest& manifest) {
    if (model.input_dim != manifest.feature_dim || model.seq_len != manifest.seq_len) {
        throw LoadError(LoadErrorKind::DimensionMismatch,
                        "model takes " + std::to_string(model.seq_len) + "x" +
                            std::to_string(model.input_dim) + " sequences, dataset holds " +
                            std::to_string(manifest.seq_len) + "x" +
                            std::to_string(manifest.feature_dim));
    }
    if (!(model.labels == manifest.labels)) {
        throw LoadError(LoadErrorKind::DimensionMismatch,
                        "model labels differ from the dataset labels");
    }
}

std::vector<SequenceSample> pick(const Dataset& data, const std::vector<std::size_t>& indices) {
    std::vector<SequenceSample> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        out.push_back(data.samples[i]);
    }
    return out;
}

// --------------------------------------------------------------------------

struct SynthArgs {
    std::string out;
    std::size_t classes = 5;
    std::size_t per_class = 60;
    double noise = 0.05;
    std::uint64_t seed = 42;
    std::string labels;
};

int run_synth(const SynthArgs& a) {
    std::vector<std::string> names;
    if (!a.labels.empty()) {
        names = split_labels(a.labels);
    } else {
        for (std::size_t c = 0; c < a.classes; ++c) {
            names.push_back("sign_" + std::to_string(c));
        }
    }
    if (names.empty()) {
        throw UsageError("at least one class is required");
    }
    SynthConfig cfg;
    cfg.per_class = a.per_class;
    cfg.noise_sigma = a.noise;
    cfg.seed = a.seed;
    const auto manifest = synth_generate(LabelSet(names), cfg, a.out);
    nlohmann::ordered_json j;
    j["dataset"] = a.out;
    j["classes"] = manifest.labels.size();
    j["samples"] = manifest.samples.size();
    j["seq_len"] = manifest.seq_len;
    j["dim"] = manifest.feature_dim;
    std::cout << j.dump() << "\n";
    return 0;
}

struct TrainArgs {
    std::string data;
    std::string out;
    std::size_t epochs = 500;
    std::size_t batch = 32;
    double lr = 0.001;
    std::uint64_t seed = 42;
    double split = 0.9;
    std::uint64_t split_seed = 42;
    std::string history;
    std::string checkpoint;
    std::size_t checkpoint_every = 50;
    std::string resume;
    std::string lstm = "64,128,64";
    std::string dense = "32";
    std::string activation = "relu";
    bool quiet = false;
};

int run_train(const TrainArgs& a) {
    const Dataset data = load_dataset(a.data);
    const Split parts = split(data.manifest, {a.split, a.split_seed});
    const auto train_set = pick(data, parts.train);

    TrainingConfig cfg;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.learning_rate = a.lr;
    cfg.shuffle_seed = a.seed;
    cfg.checkpoint_every = a.checkpoint_every;
    cfg.validate();

    TrainingState state;
    if (!a.resume.empty()) {
        state = load_checkpoint(a.resume);
        check_model_matches(state.model, data.manifest);
    } else {
        ModelSpec spec;
        spec.input_dim = data.manifest.feature_dim;
        spec.seq_len = data.manifest.seq_len;
        spec.lstm_hidden = parse_sizes(a.lstm, "--lstm");
        spec.dense_hidden = a.dense.empty() ? std::vector<std::size_t>{} : parse_sizes(a.dense, "--dense");
        spec.lstm_output = a.activation == "tanh" ? Activation::Tanh : Activation::Relu;
        state = start_training(init_model(spec, data.manifest.labels, a.seed));
    }

    run_training(state, train_set, cfg, [&](const TrainingState& s) {
        const auto& r = s.history.back();
        if (!a.quiet && (r.epoch == 1 || r.epoch % 10 == 0 || r.epoch == cfg.epochs)) {
            std::fprintf(stderr, "epoch %zu/%zu loss %.6f accuracy %.4f\n", r.epoch, cfg.epochs,
                         r.loss, r.accuracy);
        }
        if (!a.checkpoint.empty() && cfg.checkpoint_every > 0 && r.epoch % cfg.checkpoint_every == 0) {
            save_checkpoint(s, a.checkpoint);
        }
        if (!a.history.empty() && cfg.checkpoint_every > 0 && r.epoch % cfg.checkpoint_every == 0) {
            write_history_csv(s.history, a.history);
        }
    });

    save_model(state.model, a.out);
    if (!a.history.empty()) {
        write_history_csv(state.history, a.history);
    }
    if (!a.checkpoint.empty()) {
        save_checkpoint(state, a.checkpoint);
    }
    nlohmann::ordered_json j;
    j["model"] = a.out;
    j["epochs"] = state.history.size();
    j["train_samples"] = train_set.size();
    j["first_loss"] = state.history.front().loss;
    j["final_loss"] = state.history.back().loss;
    j["final_accuracy"] = state.history.back().accuracy;
    std::cout << j.dump() << "\n";
    return 0;
}

struct EvalArgs {
    std::string data;
    std::string model;
    std::string side = "test";
    double split = 0.9;
    std::uint64_t split_seed = 42;
};

int run_eval(const EvalArgs& a) {
    const Model model = load_model(a.model);
    const DatasetManifest manifest = load_manifest(a.data);
    check_model_matches(model, manifest);
    const Dataset data = load_dataset(a.data);

    std::vector<std::size_t> indices;
    if (a.side == "all") {
        indices.resize(data.samples.size());
        for (std::size_t k = 0; k < indices.size(); ++k) {
            indices[k] = k;
        }
    } else {
        const Split parts = split(data.manifest, {a.split, a.split_seed});
        indices = a.side == "train" ? parts.train : parts.test;
    }
    const auto samples = pick(data, indices);
    const Metrics m = evaluate(model, samples);

    nlohmann::ordered_json j;
    j["side"] = a.side;
    j["samples"] = samples.size();
    j["accuracy"] = m.accuracy;
    j["macro_f1"] = m.macro_f1;
    j["f1"] = m.f1;
    j["confusion"] = m.confusion;
    std::cout << j.dump() << "\n";
    return 0;
}

struct PredictArgs {
    std::string model;
    std::string input;
    std::size_t k = 10;
    double tau = 0.7;
};

int run_predict(const PredictArgs& a) {
    const Model model = load_model(a.model);
    std::ifstream in(a.input);
    if (!in) {
        throw LoadError(LoadErrorKind::Io, "cannot open " + a.input);
    }
    Session session(model, {a.k, a.tau});
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        // Bare frame records (the recorder format) are treated as frame messages.
        std::string message = line;
        const auto parsed = nlohmann::json::parse(line, nullptr, false);
        if (parsed.is_object() && !parsed.contains("type")) {
            auto typed = parsed;
            typed["type"] = "frame";
            message = typed.dump();
        }
        for (const auto& out : session.handle_line(message)) {
            std::cout << out << "\n";
        }
    }
    nlohmann::ordered_json j;
    j["type"] = "sentence";
    j["sentence"] = session.sentence_labels();
    std::cout << j.dump() << "\n";
    return 0;
}

struct ServeArgs {
    std::string model;
    std::string bind = "127.0.0.1:7861";
    std::size_t k = 10;
    double tau = 0.7;
    std::size_t max_queue = 256;
};

int run_serve(const ServeArgs& a) {
    auto model = std::make_shared<const Model>(load_model(a.model));
    const auto [host, port] = parse_bind_address(a.bind);
    ServerOptions options;
    options.host = host;
    options.port = port;
    options.max_queue = a.max_queue;

    // Block the shutdown signals in every thread; the main thread waits for them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    StreamServer server(model, {a.k, a.tau}, options);
    server.start();
    nlohmann::ordered_json j;
    j["type"] = "listening";
    j["host"] = host;
    j["port"] = server.port();
    std::cout << j.dump() << std::endl;

    int received = 0;
    sigwait(&signals, &received);
    std::fprintf(stderr, "signal %d, shutting down\n", received);
    server.stop();
    return 0;
}

int run_inspect(const std::string& path) {
    const auto bytes = read_file(path);
    const ModelFileHeader header = read_model_header(bytes);
    const Model model = decode_model(bytes);
    std::vector<std::size_t> lstm;
    for (const auto& l : model.lstm) {
        lstm.push_back(l.weights.hidden());
    }
    std::vector<std::size_t> dense;
    for (const auto& d : model.dense) {
        dense.push_back(static_cast<std::size_t>(d.weights.W.rows()));
    }
    std::cout << "format: BSLM v" << header.version << "\n"
              << "classes: " << model.num_classes() << "\n"
              << "seq_len: " << model.seq_len << "\n"
              << "dim: " << model.input_dim << "\n"
              << "lstm: " << join(lstm) << "\n"
              << "dense: " << join(dense) << "\n"
              << "output_activation: "
              << (header.output_activation == Activation::Tanh ? "tanh" : "relu") << "\n"
              << "parameters: " << parameter_count(model) << "\n";
    std::cout << "labels:";
    for (const auto& label : model.labels.labels()) {
        std::cout << " " << label;
    }
    std::cout << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sign-sequence recognition engine: synthesize data, train, evaluate, predict, serve."};
    app.require_subcommand(1);
    app.footer(
        "Every command is reproducible given explicit seeds: synth --seed fixes the generated "
        "corpus, train --seed fixes initialization and shuffling, --split-seed fixes the "
        "train/test partition.");

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
    synth->add_option("--out", synth_args.out, "Dataset directory")->required();
    auto* classes_opt = synth->add_option("--classes", synth_args.classes, "Number of classes")
                            ->check(CLI::PositiveNumber);
    synth->add_option("--per-class", synth_args.per_class, "Sequences per class")
        ->check(CLI::PositiveNumber);
    synth->add_option("--noise", synth_args.noise, "Gaussian noise sigma")->check(CLI::NonNegativeNumber);
    synth->add_option("--seed", synth_args.seed, "Generator seed");
    synth->add_option("--labels", synth_args.labels, "Comma-separated UTF-8 class names")
        ->excludes(classes_opt);

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train a model on a dataset's train split");
    train->add_option("--data", train_args.data, "Dataset directory")->required();
    train->add_option("--out", train_args.out, "Output model file")->required();
    train->add_option("--epochs", train_args.epochs, "Epochs")->check(CLI::PositiveNumber);
    train->add_option("--batch", train_args.batch, "Minibatch size")->check(CLI::PositiveNumber);
    train->add_option("--lr", train_args.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    train->add_option("--seed", train_args.seed, "Initialization and shuffle seed");
    train->add_option("--split", train_args.split, "Train fraction")->check(CLI::Range(0.0, 1.0));
    train->add_option("--split-seed", train_args.split_seed, "Split seed");
    train->add_option("--history", train_args.history, "Per-epoch history CSV");
    train->add_option("--checkpoint", train_args.checkpoint, "Checkpoint file");
    train->add_option("--checkpoint-every", train_args.checkpoint_every, "Epochs between checkpoints")
        ->check(CLI::PositiveNumber);
    auto* resume = train->add_option("--resume", train_args.resume, "Resume from checkpoint");
    auto* lstm_opt = train->add_option("--lstm", train_args.lstm, "LSTM hidden sizes");
    auto* dense_opt = train->add_option("--dense", train_args.dense, "Hidden dense sizes");
    auto* act_opt = train->add_option("--activation", train_args.activation, "LSTM output activation")
                        ->check(CLI::IsMember({"relu", "tanh"}));
    resume->excludes(lstm_opt)->excludes(dense_opt)->excludes(act_opt);
    train->add_flag("--quiet", train_args.quiet, "No progress on stderr");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Accuracy, macro-F1 and confusion matrix");
    eval->add_option("--data", eval_args.data, "Dataset directory")->required();
    eval->add_option("--model", eval_args.model, "Model file")->required();
    eval->add_option("--split-side", eval_args.side, "Which side to score")
        ->check(CLI::IsMember({"test", "train", "all"}));
    eval->add_option("--split", eval_args.split, "Train fraction")->check(CLI::Range(0.0, 1.0));
    eval->add_option("--split-seed", eval_args.split_seed, "Split seed");

    PredictArgs predict_args;
    auto* predict = app.add_subcommand("predict", "Run the real-time pipeline over an NDJSON file");
    predict->add_option("--model", predict_args.model, "Model file")->required();
    predict->add_option("--input", predict_args.input, "NDJSON frames")->required();
    predict->add_option("--k", predict_args.k, "Consecutive agreement length")->check(CLI::PositiveNumber);
    predict->add_option("--tau", predict_args.tau, "Probability threshold")->check(CLI::Range(0.0, 1.0));

    ServeArgs serve_args;
    auto* serve = app.add_subcommand("serve", "Serve the streaming protocol over TCP");
    serve->add_option("--model", serve_args.model, "Model file")->required();
    serve->add_option("--bind", serve_args.bind, "host:port");
    serve->add_option("--k", serve_args.k, "Consecutive agreement length")->check(CLI::PositiveNumber);
    serve->add_option("--tau", serve_args.tau, "Probability threshold")->check(CLI::Range(0.0, 1.0));
    serve->add_option("--max-queue", serve_args.max_queue, "Inbound frames buffered per session")
        ->check(CLI::PositiveNumber);

    std::string inspect_path;
    auto* inspect = app.add_subcommand("inspect", "Print a model file's header, dims and labels");
    inspect->add_option("--model", inspect_path, "Model file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*synth) return run_synth(synth_args);
        if (*train) return run_train(train_args);
        if (*eval) return run_eval(eval_args);
        if (*predict) return run_predict(predict_args);
        if (*serve) return run_serve(serve_args);
        if (*inspect) return run_inspect(inspect_path);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const signlang::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
