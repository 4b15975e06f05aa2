#pragma once

// Benchmark driver: transactional set workloads with range queries,
// dedicated updater threads, key distributions and time-varying intervals.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mv/config.hpp"
#include "mv/core_runtime.hpp"
#include "mv/tm.hpp"

namespace mv {

enum class DsKind { List, ExtBst, HashMap, AbTree };
const char* dsKindName(DsKind k);
std::optional<DsKind> parseDsKind(std::string_view s);

// Percentages of search, insert, delete and range query; they sum to 100.
struct Mix {
    double search = 90;
    double insert = 5;
    double erase = 5;
    double rq = 0;
};
// Parses "search,insert,delete,rq". Throws std::invalid_argument.
Mix parseMix(std::string_view s);

struct Interval {
    double seconds = 1;
    Mix mix;
    uint64_t rqSize = 1000;
    uint32_t updaters = 0;
};

struct WorkloadSpec {
    DsKind ds = DsKind::AbTree;
    TmKind tm = TmKind::Multiverse;
    uint32_t threads = 8;
    uint32_t updaters = 0;
    uint64_t prefill = 100000;
    uint64_t keyRange = 200000;
    double zipfTheta = 0;  // 0 selects the uniform distribution
    Mix mix;
    uint64_t rqSize = 1000;
    double seconds = 20;
    // When non-empty these replace mix, rqSize, updaters and seconds.
    std::vector<Interval> intervals;
    uint64_t seed = 42;
    // Aborts before a baseline transaction turns irrevocable; 0 disables.
    uint32_t dctlIrrevocableAfter = 100;
    uint32_t sampleMs = 200;
    Config base = Config::fromEnv();

    // The intervals actually run (a single one when `intervals` is empty).
    std::vector<Interval> schedule() const;
    // Throws std::invalid_argument.
    void validate() const;
};

// Parses "uniform" or "zipf:<theta>" into a theta (0 for uniform).
double parseDist(std::string_view s);

struct MetricsSample {
    uint64_t elapsedMs;
    uint32_t updaters;
    uint64_t ops;  // worker operations committed during the sample period
    uint64_t rqCommits;
    uint64_t aborts;
    Mode mode;
    uint64_t liveVersionNodes;
    uint64_t rssKb;
};

struct ModeChange {
    double ms;
    Mode mode;
};

struct IntervalResult {
    double startMs;
    double endMs;
    uint64_t ops;
    uint64_t rqCommits;
    uint64_t updaterOps;
    double throughput;  // worker ops per second
    double modeResidency[4];  // fraction of the interval spent in each mode
};

enum OpType { kSearch, kInsert, kErase, kRangeQuery, kOpTypes };

struct BenchResult {
    double seconds{0};
    uint64_t workerOps{0};
    uint64_t updaterOps{0};
    uint64_t rqCommits{0};
    uint64_t aborts{0};
    uint64_t opCommits[kOpTypes]{};
    double throughput{0};
    std::vector<IntervalResult> intervals;
    std::vector<MetricsSample> samples;
    std::vector<ModeChange> modeTimeline;
    uint64_t peakRssKb{0};
    uint64_t maxLiveVersionNodes{0};
    uint64_t poisonHits{0};
    bool endStateOk{false};
    std::string endStateMessage;
};

BenchResult runBenchmark(const WorkloadSpec& spec);

inline constexpr const char* kCsvHeader =
    "elapsed_ms,tm,threads,updaters,ops,rq_commits,aborts,mode,live_version_nodes,rss_kb";
void writeCsv(std::ostream& out, const WorkloadSpec& spec, const BenchResult& r);

// Reads an interval workload from a TOML subset: top-level `key = value`
// lines (ds, tm, threads, prefill, keyrange, dist, seed, irrevocable) and one
// `[[interval]]` table per interval with seconds, mix, rq_size and updaters.
// Values are integers, decimals or double-quoted strings; `#` starts a
// comment. Throws std::invalid_argument with the offending line number.
WorkloadSpec parseIntervalsSpec(std::istream& in, WorkloadSpec base);

// VmRSS and VmHWM of this process in KiB, 0 when unavailable.
uint64_t currentRssKb();
uint64_t peakRssKb();

}  // namespace mv
