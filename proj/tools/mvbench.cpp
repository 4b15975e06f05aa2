// mvbench: benchmark driver and history checker.
//
//   mvbench run --ds abtree --tm multiverse --threads 8 --updaters 4 --mix 89.99,5,5,0.01 --out m.csv
//   mvbench intervals --spec intervals.toml --out m.csv
//   mvbench verify --in history.log
//   mvbench verify --stress --tm multiverse --threads 4 --windows 1000 --cycle

#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "mv/bench.hpp"
#include "mv/history.hpp"
#include "mv/opacity.hpp"
#include "mv/stress.hpp"

namespace {

struct RunArgs {
    std::string ds = "abtree";
    std::string tm = "multiverse";
    uint32_t threads = 8;
    uint32_t updaters = 0;
    uint64_t prefill = 100000;
    uint64_t keyRange = 200000;
    std::string mix = "90,5,5,0";
    uint64_t rqSize = 1000;
    std::string dist = "uniform";
    double seconds = 20;
    uint64_t seed = 42;
    uint32_t irrevocable = mv::Dctl::kDefaultIrrevocableAfter;
    std::string out;
};

void addWorkloadFlags(CLI::App* cmd, RunArgs& a, bool withMix) {
    cmd->add_option("--ds", a.ds, "list | extBst | hashmap | abtree")->envname("MVBENCH_DS");
    cmd->add_option("--tm", a.tm, "multiverse | dctl | modeQOnly | modeUOnly")->envname("MVBENCH_TM");
    cmd->add_option("--threads", a.threads, "worker threads")->envname("MVBENCH_THREADS");
    cmd->add_option("--prefill", a.prefill, "keys inserted before timing")->envname("MVBENCH_PREFILL");
    cmd->add_option("--keyrange", a.keyRange, "keys are drawn from [1, keyrange]")->envname("MVBENCH_KEYRANGE");
    cmd->add_option("--dist", a.dist, "uniform | zipf:<theta>")->envname("MVBENCH_DIST");
    cmd->add_option("--seed", a.seed, "random seed")->envname("MVBENCH_SEED");
    cmd->add_option("--irrevocable", a.irrevocable, "baseline aborts before irrevocability, 0 disables")
        ->envname("MVBENCH_IRREVOCABLE");
    cmd->add_option("--out", a.out, "CSV output file (stdout when absent)")->envname("MVBENCH_OUT");
    if (!withMix) return;
    cmd->add_option("--updaters", a.updaters, "dedicated updater threads")->envname("MVBENCH_UPDATERS");
    cmd->add_option("--mix", a.mix, "search,insert,delete,rq percentages")->envname("MVBENCH_MIX");
    cmd->add_option("--rq-size", a.rqSize, "keys per range query")->envname("MVBENCH_RQ_SIZE");
    cmd->add_option("--seconds", a.seconds, "measured duration")->envname("MVBENCH_SECONDS");
}

mv::WorkloadSpec toSpec(const RunArgs& a) {
    mv::WorkloadSpec s;
    const auto ds = mv::parseDsKind(a.ds);
    if (!ds) throw std::invalid_argument("unknown data structure " + a.ds);
    const auto tm = mv::parseTmKind(a.tm);
    if (!tm) throw std::invalid_argument("unknown tm " + a.tm);
    s.ds = *ds;
    s.tm = *tm;
    s.threads = a.threads;
    s.updaters = a.updaters;
    s.prefill = a.prefill;
    s.keyRange = a.keyRange;
    s.mix = mv::parseMix(a.mix);
    s.rqSize = a.rqSize;
    s.zipfTheta = mv::parseDist(a.dist);
    s.seconds = a.seconds;
    s.seed = a.seed;
    s.dctlIrrevocableAfter = a.irrevocable;
    return s;
}

int runAndReport(const mv::WorkloadSpec& spec, const std::string& out) {
    const mv::BenchResult r = mv::runBenchmark(spec);
    if (out.empty()) {
        mv::writeCsv(std::cout, spec, r);
    } else {
        std::ofstream f(out);
        if (!f) throw std::runtime_error("cannot write " + out);
        mv::writeCsv(f, spec, r);
    }
    std::cerr << "tm=" << mv::tmKindName(spec.tm) << " ds=" << mv::dsKindName(spec.ds) << " seconds=" << r.seconds
              << " throughput=" << r.throughput << " ops/s rq_commits=" << r.rqCommits
              << " updater_ops=" << r.updaterOps << " aborts=" << r.aborts << " peak_rss_kb=" << r.peakRssKb
              << " max_live_version_nodes=" << r.maxLiveVersionNodes << '\n';
    for (std::size_t i = 0; i < r.intervals.size(); ++i) {
        const mv::IntervalResult& iv = r.intervals[i];
        std::cerr << "interval " << i + 1 << ": throughput=" << iv.throughput << " rq_commits=" << iv.rqCommits
                  << " residency Q/QtoU/U/UtoQ=" << iv.modeResidency[0] << '/' << iv.modeResidency[1] << '/'
                  << iv.modeResidency[2] << '/' << iv.modeResidency[3] << '\n';
    }
    std::cerr << "end state: " << (r.endStateOk ? "ok" : "MISMATCH") << " (" << r.endStateMessage << ")\n";
    return r.endStateOk ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multiverse STM benchmark and verification driver"};
    app.require_subcommand(1);

    RunArgs runArgs;
    CLI::App* run = app.add_subcommand("run", "run one workload and emit CSV metrics");
    addWorkloadFlags(run, runArgs, true);

    RunArgs ivArgs;
    std::string specPath;
    CLI::App* intervals = app.add_subcommand("intervals", "run a time-varying workload from a spec file");
    intervals->add_option("--spec", specPath, "interval spec (TOML subset)")->required()->envname("MVBENCH_SPEC");
    addWorkloadFlags(intervals, ivArgs, false);

    std::string historyPath;
    bool stress = false;
    mv::StressOptions so;
    std::string stressTm = "multiverse";
    std::string dumpPath;
    CLI::App* verify = app.add_subcommand("verify", "check a recorded history or run the opacity stress");
    verify->add_option("--in", historyPath, "history file: seq txn attempt kind cell value per line");
    verify->add_flag("--stress", stress, "run randomized windows against a live runtime");
    verify->add_option("--tm", stressTm, "multiverse | dctl");
    verify->add_option("--threads", so.threads, "stress threads");
    verify->add_option("--cells", so.cells, "stress cells");
    verify->add_option("--txns", so.txnsPerThread, "transactions per thread per window");
    verify->add_option("--windows", so.windows, "stress windows");
    verify->add_option("--seed", so.seed, "random seed");
    verify->add_flag("--cycle", so.forceModeCycling, "force mode cycling");
    verify->add_flag("--mutation", so.mutation, "skip writer read-set revalidation");
    verify->add_option("--dump", dumpPath, "write the first violating history here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return runAndReport(toSpec(runArgs), runArgs.out);
        if (*intervals) {
            std::ifstream in(specPath);
            if (!in) throw std::runtime_error("cannot read " + specPath);
            RunArgs defaults = ivArgs;
            return runAndReport(mv::parseIntervalsSpec(in, toSpec(defaults)), ivArgs.out);
        }
        if (*verify) {
            if (stress) {
                so.stopOnViolation = so.mutation;
                const mv::StressReport r = stressTm == "dctl" ? mv::stressAndCheck<mv::Dctl>(so)
                                                              : mv::stressAndCheck<mv::Multiverse>(so);
                std::cout << "windows=" << r.windows << " violations=" << r.violations
                          << " size_exceeded=" << r.sizeExceeded << " commits=" << r.commits
                          << " aborts=" << r.aborts << " versioned_commits=" << r.versionedCommits
                          << " mode_cycles=" << r.modeCycles << '\n';
                if (r.violations > 0) {
                    std::cout << "first violation in window " << r.firstViolationWindow << ": " << r.firstViolation
                              << '\n';
                    if (!dumpPath.empty()) {
                        std::ofstream f(dumpPath);
                        mv::writeHistory(f, r.firstViolationHistory);
                    }
                }
                return r.violations == 0 ? 0 : 1;
            }
            if (historyPath.empty()) throw std::invalid_argument("verify needs --in or --stress");
            std::ifstream in(historyPath);
            if (!in) throw std::runtime_error("cannot read " + historyPath);
            const mv::OpacityVerdict v = mv::checkOpacity(mv::readHistory(in));
            switch (v.status) {
                case mv::OpacityVerdict::Status::Ok:
                    std::cout << "ok: serialization order";
                    for (uint64_t t : v.witness) std::cout << ' ' << t;
                    std::cout << '\n';
                    return 0;
                case mv::OpacityVerdict::Status::Violation:
                    std::cout << "violation: " << v.message << '\n';
                    return 1;
                case mv::OpacityVerdict::Status::SizeExceeded:
                    std::cout << "size exceeded: " << v.message << '\n';
                    return 2;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "mvbench: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
