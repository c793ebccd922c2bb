// memkd: knowledge-distillation toolkit for recurrent time-series classifiers.
//
// Subcommands: synth, train-teacher, distill, evaluate, report, gradcheck.
// Exit codes: 0 success, 1 runtime error, 2 usage/config error.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "memkd/config.hpp"
#include "memkd/data.hpp"
#include "memkd/model_io.hpp"
#include "memkd/report.hpp"
#include "memkd/training.hpp"

namespace {

using namespace memkd;

Dataset load_and_preprocess(const std::string& path, std::size_t target_length) {
    return preprocess(load_ucr(path), target_length);
}

int cmd_synth(const std::string& out_prefix, std::size_t classes, std::size_t train_count,
              std::size_t test_count, double noise, std::uint64_t seed) {
    auto [train, test] = make_synthetic(classes, train_count, test_count, 100, noise, seed);
    save_ucr(train, out_prefix + "_train.txt");
    save_ucr(test, out_prefix + "_test.txt");
    std::map<int, std::size_t> counts;
    for (const auto& s : train.samples) ++counts[s.label];
    std::cout << "wrote " << out_prefix << "_train.txt (" << train.size() << " samples) and "
              << out_prefix << "_test.txt (" << test.size() << " samples)\n";
    for (const auto& [cls, n] : counts) std::cout << "  class " << cls << ": " << n << " train samples\n";
    return 0;
}

int cmd_train_teacher(const std::string& config_path, const std::string& data_path,
                      const std::string& out_path) {
    RunConfig cfg = load_run_config(config_path);
    Dataset full = load_and_preprocess(data_path, cfg.target_length);
    auto [train, val] = split_train_val(full, {cfg.val_fraction, cfg.base_seed});
    LstmConfig arch = cfg.teacher_arch(full.channels(), full.num_classes);
    TeacherRun run = train_teacher(train, val, arch, cfg.teacher_train_config());
    run.bundle.config_digest = cfg.digest;
    save_model(run.bundle, out_path);
    std::string run_dir = out_path + ".runs";
    for (const auto& rr : run.per_seed) {
        write_run_json(rr, run_dir);
        std::cout << "seed " << rr.seed << ": val AUC-PRC "
                  << (rr.failed ? "FAILED (" + rr.failure + ")" : std::to_string(rr.val_auc_prc))
                  << "\n";
    }
    std::cout << "saved best teacher (seed " << run.bundle.creation_seed << ", "
              << param_count(arch) << " parameters) to " << out_path << "\n";
    return 0;
}

int cmd_distill(const std::string& config_path, const std::string& teacher_path,
                const std::string& data_path, const std::string& test_path,
                const std::string& method_name_arg, const std::string& out_path) {
    RunConfig cfg = load_run_config(config_path);
    auto method = parse_method(method_name_arg);
    if (!method) {
        std::cerr << "error: unknown method '" << method_name_arg
                  << "'; supported: none, kd, fitnets, memkd\n";
        return 2;
    }
    ModelBundle teacher = load_model(teacher_path);
    Dataset full = load_and_preprocess(data_path, cfg.target_length);
    if (full.label_map != teacher.label_map)
        throw TrainError("label map of " + data_path + " does not match the teacher's");
    auto [train, val] = split_train_val(full, {cfg.val_fraction, cfg.base_seed});
    LstmConfig student = cfg.student_arch(full.channels(), full.num_classes);
    // metrics in the run JSONs come from --test when given, else the train file
    Dataset metric_set = test_path.empty() ? full : load_and_preprocess(test_path, cfg.target_length);
    if (metric_set.label_map != teacher.label_map)
        throw TrainError("label map of the metric dataset does not match the teacher's");

    TeacherCache cache;
    if (*method != Method::none) cache = build_teacher_cache(teacher, train);

    double beta = 0.0;
    if (*method != Method::none) {
        if (cfg.beta_fixed) {
            beta = *cfg.beta_fixed;
        } else {
            std::cout << "grid search over beta:";
            for (double b : cfg.beta_grid) std::cout << ' ' << b;
            std::cout << "\n";
            GridSearchResult gs = grid_search_beta(teacher, train, val, student,
                                                   cfg.student_train_config(*method, 0.0),
                                                   cfg.beta_grid, &cache);
            beta = gs.best_beta;
            std::cout << "selected beta = " << beta << "\n";
        }
    }

    std::string run_dir = out_path + ".runs";
    std::vector<RunResult> runs;
    ParamSet best_params;
    double best_prc = -1.0;
    std::uint64_t best_seed = 0;
    TrainConfig tc = cfg.student_train_config(*method, beta);
    for (std::size_t i = 0; i < cfg.seeds; ++i) {
        std::uint64_t seed = cfg.base_seed + i;
        ParamSet params;
        RunResult rr;
        try {
            rr = distill_student(teacher, train, val, student, tc, seed, params, &cache);
            rr.config_digest = cfg.digest;
            Tensor probs = predict_probs(metric_set, params, student, tc.batch_size);
            std::vector<int> labels;
            for (const auto& s : metric_set.samples) labels.push_back(s.label);
            rr.test = evaluate_metrics(probs, labels);
        } catch (const std::exception& e) {
            rr.seed = seed;
            rr.method = method_name(*method);
            rr.failed = true;
            rr.failure = e.what();
        }
        if (!rr.failed && rr.val_auc_prc > best_prc) {
            best_prc = rr.val_auc_prc;
            best_params = params;
            best_seed = seed;
        }
        write_run_json(rr, run_dir);
        runs.push_back(std::move(rr));
    }
    Aggregate agg = aggregate_runs(runs);
    if (agg.seed_count == 0) throw TrainError("all distillation seeds failed");
    ModelBundle bundle;
    bundle.config = student;
    bundle.params = best_params;
    bundle.label_map = full.label_map;
    bundle.creation_seed = best_seed;
    bundle.config_digest = cfg.digest;
    save_model(bundle, out_path);
    nlohmann::json agg_json{{"dataset", train.name},
                            {"method", method_name(*method)},
                            {"beta", beta},
                            {"seed_count", agg.seed_count},
                            {"failed_count", agg.failed_count},
                            {"acc_mean", agg.acc_mean},
                            {"auc_roc_mean", agg.auc_roc_mean},
                            {"auc_prc_mean", agg.auc_prc_mean},
                            {"auc_prc_std", agg.auc_prc_std}};
    {
        std::ofstream f(out_path + ".aggregate.json", std::ios::trunc);
        f << agg_json.dump(2) << "\n";
    }
    std::cout << "method " << method_name(*method) << " beta " << beta << ": AUC-PRC mean "
              << agg.auc_prc_mean << " over " << agg.seed_count << " seeds ("
              << agg.failed_count << " failed)\n";
    std::cout << "saved best student (seed " << best_seed << ") to " << out_path << "\n";
    return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data_path,
                 const std::string& out_path) {
    ModelBundle bundle = load_model(model_path);
    Dataset d = load_and_preprocess(data_path, 100);
    for (const auto& [label, _] : d.label_map)
        if (!bundle.label_map.count(label))
            throw TrainError("dataset has label " + std::to_string(label) +
                             " unseen by the model's label map");
    // realign class indices through the model's label map
    std::map<int, int> remap;
    for (const auto& [label, idx] : d.label_map) remap[idx] = bundle.label_map.at(label);
    for (auto& s : d.samples) s.label = remap.at(s.label);

    Tensor probs = predict_probs(d, bundle.params, bundle.config);
    std::vector<int> labels;
    for (const auto& s : d.samples) labels.push_back(s.label);
    MetricReport m = evaluate_metrics(probs, labels);
    nlohmann::json j{{"model", model_path},
                     {"data", data_path},
                     {"accuracy", m.accuracy},
                     {"auc_roc", m.auc_roc},
                     {"auc_prc", m.auc_prc},
                     {"sample_count", m.sample_count}};
    std::string text = j.dump(2) + "\n";
    if (out_path.empty() || out_path == "-") {
        std::cout << text;
    } else {
        std::ofstream f(out_path, std::ios::trunc);
        if (!f) throw ReportError("cannot write " + out_path);
        f << text;
        std::cout << "accuracy " << m.accuracy << ", AUC-ROC " << m.auc_roc << ", AUC-PRC "
                  << m.auc_prc << " -> " << out_path << "\n";
    }
    return 0;
}

int cmd_report(const std::string& runs_dir, const std::string& out_csv) {
    Report rep = build_report(scan_run_dir(runs_dir));
    for (const auto& w : rep.table.warnings) std::cerr << "warning: " << w << "\n";
    std::string csv = report_csv(rep);
    if (out_csv.empty() || out_csv == "-") {
        std::cout << csv;
    } else {
        std::ofstream f(out_csv, std::ios::trunc);
        if (!f) throw ReportError("cannot write " + out_csv);
        f << csv;
        std::cout << "wrote " << out_csv << "\n";
    }
    return 0;
}

int cmd_gradcheck() {
    bool all_pass = true;
    for (const auto& line : gradient_check_model(1)) {
        std::cout << (line.pass ? "PASS" : "FAIL") << "  method=" << line.method
                  << "  max_rel_error=" << line.max_rel_error;
        if (!line.note.empty()) std::cout << "  (" << line.note << ")";
        std::cout << "\n";
        all_pass = all_pass && line.pass;
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"memkd: memory-discrepancy knowledge distillation for LSTM time-series classifiers"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "generate a synthetic UCR-format dataset pair");
    std::string synth_out = "synthetic";
    std::size_t synth_classes = 3, synth_train = 200, synth_test = 200;
    double synth_noise = 0.3;
    std::uint64_t synth_seed = 0;
    synth->add_option("--out", synth_out, "output file prefix");
    synth->add_option("--classes", synth_classes)->check(CLI::Range(std::size_t{2}, std::size_t{64}));
    synth->add_option("--train", synth_train);
    synth->add_option("--test", synth_test);
    synth->add_option("--noise", synth_noise);
    synth->add_option("--seed", synth_seed);

    auto* tt = app.add_subcommand("train-teacher", "train the teacher over multiple seeds");
    std::string tt_config, tt_data, tt_out = "teacher.mkd";
    tt->add_option("--config", tt_config)->required();
    tt->add_option("--data", tt_data)->required();
    tt->add_option("--out", tt_out);

    auto* di = app.add_subcommand("distill", "train students against a frozen teacher");
    std::string di_config, di_teacher, di_data, di_test, di_method = "memkd", di_out = "student.mkd";
    di->add_option("--config", di_config)->required();
    di->add_option("--teacher", di_teacher)->required();
    di->add_option("--data", di_data)->required();
    di->add_option("--test", di_test, "held-out file for the run-JSON test metrics");
    di->add_option("--method", di_method, "none | kd | fitnets | memkd");
    di->add_option("--out", di_out);

    auto* ev = app.add_subcommand("evaluate", "evaluate a saved model on a dataset");
    std::string ev_model, ev_data, ev_out;
    ev->add_option("--model", ev_model)->required();
    ev->add_option("--data", ev_data)->required();
    ev->add_option("--out", ev_out, "metrics JSON path (default stdout)");

    auto* rp = app.add_subcommand("report", "aggregate run JSONs into a comparison CSV");
    std::string rp_runs, rp_out;
    rp->add_option("--runs", rp_runs)->required();
    rp->add_option("--out", rp_out, "CSV path (default stdout)");

    app.add_subcommand("gradcheck", "verify analytic gradients against finite differences");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed())
            return cmd_synth(synth_out, synth_classes, synth_train, synth_test, synth_noise, synth_seed);
        if (tt->parsed()) return cmd_train_teacher(tt_config, tt_data, tt_out);
        if (di->parsed())
            return cmd_distill(di_config, di_teacher, di_data, di_test, di_method, di_out);
        if (ev->parsed()) return cmd_evaluate(ev_model, ev_data, ev_out);
        if (rp->parsed()) return cmd_report(rp_runs, rp_out);
        return cmd_gradcheck();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
