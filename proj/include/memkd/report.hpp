#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memkd/metrics.hpp"
#include "memkd/training.hpp"

namespace memkd {

struct ReportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Run file name: <dataset>__<method>__beta<b>__seed<s>.json
inline std::string run_file_name(const RunResult& r) {
    std::ostringstream os;
    os << r.dataset << "__" << r.method << "__beta" << r.beta << "__seed" << r.seed << ".json";
    return os.str();
}

inline void write_run_json(const RunResult& r, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::string path = (std::filesystem::path(dir) / run_file_name(r)).string();
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ReportError("cannot write run file " + path);
    f << run_result_json(r).dump(2) << '\n';
}

struct ReportCell {
    Aggregate agg;
    std::vector<RunResult> runs;
};

struct ReportTable {
    std::vector<std::string> methods;   // row order
    std::vector<std::string> datasets;  // column order
    std::map<std::string, std::map<std::string, ReportCell>> cells;  // method -> dataset
    std::vector<std::string> warnings;
};

/// Scan a run directory of per-seed JSONs and aggregate by (method, dataset).
inline ReportTable scan_run_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw ReportError("run directory not found: " + dir);
    std::map<std::string, std::map<std::string, std::vector<RunResult>>> grouped;
    std::set<std::string> methods, datasets;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ReportError("no run JSONs in " + dir);
    for (const auto& p : files) {
        std::ifstream f(p);
        nlohmann::json j;
        try {
            f >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ReportError("corrupt run file " + p.string() + ": " + e.what());
        }
        RunResult r;
        r.dataset = j.at("dataset").get<std::string>();
        r.method = j.at("method").get<std::string>();
        r.beta = j.value("beta", 0.0);
        r.seed = j.value("seed", std::uint64_t{0});
        r.failed = j.value("failed", false);
        const auto& t = j.at("test");
        r.test.accuracy = t.at("accuracy").get<double>();
        r.test.auc_roc = t.at("auc_roc").get<double>();
        r.test.auc_prc = t.at("auc_prc").get<double>();
        grouped[r.method][r.dataset].push_back(std::move(r));
        methods.insert(j.at("method").get<std::string>());
        datasets.insert(j.at("dataset").get<std::string>());
    }
    ReportTable table;
    table.methods.assign(methods.begin(), methods.end());
    table.datasets.assign(datasets.begin(), datasets.end());
    for (const auto& m : table.methods)
        for (const auto& d : table.datasets) {
            auto mit = grouped.find(m);
            if (mit == grouped.end() || !mit->second.count(d)) {
                table.warnings.push_back("method '" + m + "' has no runs on dataset '" + d +
                                         "'; ranks exclude incomplete methods");
                continue;
            }
            ReportCell cell;
            cell.runs = mit->second.at(d);
            cell.agg = aggregate_runs(cell.runs);
            table.cells[m][d] = std::move(cell);
        }
    return table;
}

struct MethodSummary {
    std::string method;
    WinTieLoss vs_base;
    double avg_rank = 0.0;            // over methods excluding "teacher"
    double avg_rank_with_teacher = 0.0;
    bool ranked = false;
};

struct Report {
    ReportTable table;
    std::vector<MethodSummary> summaries;
};

/// Build the comparison report: AUC-PRC means per cell, win/tie/loss vs the
/// Base student ("none"), and average ranks with and without the teacher row.
inline Report build_report(const ReportTable& table) {
    Report rep;
    rep.table = table;

    auto complete = [&](const std::string& m) {
        for (const auto& d : table.datasets)
            if (!table.cells.count(m) || !table.cells.at(m).count(d)) return false;
        return true;
    };
    auto scores = [&](const std::string& m) {
        std::vector<double> out;
        for (const auto& d : table.datasets) out.push_back(table.cells.at(m).at(d).agg.auc_prc_mean);
        return out;
    };

    std::vector<std::string> ranked_all, ranked_students;
    for (const auto& m : table.methods)
        if (complete(m)) {
            ranked_all.push_back(m);
            if (m != "teacher") ranked_students.push_back(m);
        }
    std::map<std::string, double> rank_no_teacher, rank_with_teacher;
    auto fill_ranks = [&](const std::vector<std::string>& methods, std::map<std::string, double>& out) {
        if (methods.empty()) return;
        std::vector<std::vector<double>> tab;
        for (const auto& m : methods) tab.push_back(scores(m));
        std::vector<double> ranks = average_rank(tab);
        for (std::size_t i = 0; i < methods.size(); ++i) out[methods[i]] = ranks[i];
    };
    fill_ranks(ranked_students, rank_no_teacher);
    fill_ranks(ranked_all, rank_with_teacher);

    bool have_base = complete("none");
    for (const auto& m : table.methods) {
        MethodSummary s;
        s.method = m;
        if (complete(m)) {
            s.ranked = true;
            if (rank_no_teacher.count(m)) s.avg_rank = rank_no_teacher[m];
            if (rank_with_teacher.count(m)) s.avg_rank_with_teacher = rank_with_teacher[m];
            if (have_base) s.vs_base = win_tie_loss(scores(m), scores("none"));
        }
        rep.summaries.push_back(std::move(s));
    }
    return rep;
}

/// CSV: the per-(method, dataset) table, a blank line, then per-method
/// summary rows (win/tie/loss vs Base and average ranks).
inline std::string report_csv(const Report& rep) {
    std::ostringstream os;
    os.precision(17);
    os << "method,dataset,auc_prc_mean,auc_prc_std,auc_roc_mean,acc_mean,rank\n";
    std::map<std::string, double> rank_of;
    for (const auto& s : rep.summaries)
        if (s.ranked) rank_of[s.method] = s.method == "teacher" ? s.avg_rank_with_teacher : s.avg_rank;
    for (const auto& m : rep.table.methods)
        for (const auto& d : rep.table.datasets) {
            if (!rep.table.cells.count(m) || !rep.table.cells.at(m).count(d)) {
                os << m << ',' << d << ",,,,,\n";  // partial-table row
                continue;
            }
            const Aggregate& a = rep.table.cells.at(m).at(d).agg;
            os << m << ',' << d << ',' << a.auc_prc_mean << ',' << a.auc_prc_std << ','
               << a.auc_roc_mean << ',' << a.acc_mean << ',';
            if (rank_of.count(m)) os << rank_of[m];
            os << '\n';
        }
    os << '\n';
    os << "method,wins_vs_base,ties_vs_base,losses_vs_base,avg_rank,avg_rank_with_teacher\n";
    for (const auto& s : rep.summaries) {
        if (!s.ranked) {
            os << s.method << ",,,,,\n";
            continue;
        }
        os << s.method << ',' << s.vs_base.wins << ',' << s.vs_base.ties << ',' << s.vs_base.losses
           << ',' << s.avg_rank << ',' << s.avg_rank_with_teacher << '\n';
    }
    return os.str();
}

}  // namespace memkd
