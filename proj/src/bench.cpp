#include "mv/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mv/ds/abtree.hpp"
#include "mv/ds/ext_bst.hpp"
#include "mv/ds/hashmap.hpp"
#include "mv/ds/sorted_list.hpp"
#include "mv/zipf.hpp"

namespace mv {

const char* dsKindName(DsKind k) {
    switch (k) {
        case DsKind::List: return "list";
        case DsKind::ExtBst: return "extBst";
        case DsKind::HashMap: return "hashmap";
        case DsKind::AbTree: return "abtree";
    }
    return "?";
}

std::optional<DsKind> parseDsKind(std::string_view s) {
    for (DsKind k : {DsKind::List, DsKind::ExtBst, DsKind::HashMap, DsKind::AbTree}) {
        if (s == dsKindName(k)) return k;
    }
    return std::nullopt;
}

Mix parseMix(std::string_view s) {
    double v[4];
    std::string buf(s);
    std::replace(buf.begin(), buf.end(), ',', ' ');
    std::istringstream in(buf);
    for (double& x : v) {
        if (!(in >> x) || x < 0) throw std::invalid_argument("mix must be four non-negative percentages");
    }
    std::string rest;
    if (in >> rest) throw std::invalid_argument("mix must be four non-negative percentages");
    return Mix{v[0], v[1], v[2], v[3]};
}

double parseDist(std::string_view s) {
    if (s == "uniform") return 0;
    if (s.rfind("zipf:", 0) == 0) {
        const double theta = std::stod(std::string(s.substr(5)));
        if (!(theta > 0)) throw std::invalid_argument("zipf exponent must be positive");
        return theta;
    }
    throw std::invalid_argument("distribution must be uniform or zipf:<theta>");
}

std::vector<Interval> WorkloadSpec::schedule() const {
    if (!intervals.empty()) return intervals;
    return {Interval{seconds, mix, rqSize, updaters}};
}

void WorkloadSpec::validate() const {
    auto fail = [](const char* m) { throw std::invalid_argument(m); };
    if (threads == 0) fail("threads must be positive");
    if (keyRange == 0 || keyRange > ds::kMaxKey) fail("keyrange out of range");
    if (prefill > keyRange) fail("prefill exceeds keyrange");
    if (zipfTheta < 0) fail("zipf exponent must be positive");
    if (sampleMs == 0) fail("sample period must be positive");
    for (const Interval& iv : schedule()) {
        const Mix& m = iv.mix;
        if (std::abs(m.search + m.insert + m.erase + m.rq - 100.0) > 1e-6) fail("mix must sum to 100");
        if (!(iv.seconds > 0)) fail("durations must be positive");
        if (m.rq > 0 && iv.rqSize == 0) fail("range query size must be positive");
    }
    base.validate();
}

WorkloadSpec parseIntervalsSpec(std::istream& in, WorkloadSpec spec) {
    spec.intervals.clear();
    std::string line;
    int lineNo = 0;
    auto fail = [&](const std::string& why) {
        throw std::invalid_argument("line " + std::to_string(lineNo) + ": " + why);
    };
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineNo;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line == "[[interval]]") {
            spec.intervals.push_back(Interval{1, Mix{}, spec.rqSize, 0});
            continue;
        }
        if (line.front() == '[') fail("unsupported table " + line);
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected key = value");
        const std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (val.size() >= 2 && val.front() == '"' && val.back() == '"') {
            val = val.substr(1, val.size() - 2);
        } else if (val.find('"') != std::string::npos) {
            fail("unterminated string");
        }
        try {
            if (!spec.intervals.empty()) {
                Interval& iv = spec.intervals.back();
                if (key == "seconds") {
                    iv.seconds = std::stod(val);
                } else if (key == "mix") {
                    iv.mix = parseMix(val);
                } else if (key == "rq_size") {
                    iv.rqSize = std::stoull(val);
                } else if (key == "updaters") {
                    iv.updaters = static_cast<uint32_t>(std::stoul(val));
                } else {
                    fail("unknown interval key " + key);
                }
                continue;
            }
            if (key == "ds") {
                const auto d = parseDsKind(val);
                if (!d) fail("unknown data structure " + val);
                spec.ds = *d;
            } else if (key == "tm") {
                const auto t = parseTmKind(val);
                if (!t) fail("unknown tm " + val);
                spec.tm = *t;
            } else if (key == "threads") {
                spec.threads = static_cast<uint32_t>(std::stoul(val));
            } else if (key == "prefill") {
                spec.prefill = std::stoull(val);
            } else if (key == "keyrange") {
                spec.keyRange = std::stoull(val);
            } else if (key == "dist") {
                spec.zipfTheta = parseDist(val);
            } else if (key == "seed") {
                spec.seed = std::stoull(val);
            } else if (key == "irrevocable") {
                spec.dctlIrrevocableAfter = static_cast<uint32_t>(std::stoul(val));
            } else {
                fail("unknown key " + key);
            }
        } catch (const std::logic_error& e) {
            if (std::string(e.what()).rfind("line ", 0) == 0) throw;
            fail("bad value for " + key + ": " + e.what());
        }
    }
    if (spec.intervals.empty()) throw std::invalid_argument("no [[interval]] tables");
    double total = 0;
    for (const Interval& iv : spec.intervals) total += iv.seconds;
    spec.seconds = total;
    return spec;
}

namespace {

uint64_t procStatusKb(const char* field) {
    std::ifstream in("/proc/self/status");
    std::string line;
    const std::string prefix = std::string(field) + ":";
    while (std::getline(in, line)) {
        if (line.rfind(prefix, 0) == 0) return std::stoull(line.substr(prefix.size()));
    }
    return 0;
}

}  // namespace

uint64_t currentRssKb() { return procStatusKb("VmRSS"); }
uint64_t peakRssKb() { return procStatusKb("VmHWM"); }

void writeCsv(std::ostream& out, const WorkloadSpec& spec, const BenchResult& r) {
    out << kCsvHeader << '\n';
    for (const MetricsSample& s : r.samples) {
        out << s.elapsedMs << ',' << tmKindName(spec.tm) << ',' << spec.threads << ',' << s.updaters << ',' << s.ops
            << ',' << s.rqCommits << ',' << s.aborts << ',' << modeName(s.mode) << ',' << s.liveVersionNodes << ','
            << s.rssKb << '\n';
    }
}

namespace {

using Clock = std::chrono::steady_clock;

// Thrown out of a retrying operation once the run is over.
struct RunStopped {};

struct alignas(kCacheLine) Counters {
    std::atomic<uint64_t> ops[kOpTypes]{};
    std::atomic<uint64_t> updaterOps{0};
};

struct Totals {
    uint64_t ops[kOpTypes]{};
    uint64_t updaterOps{0};

    uint64_t workerOps() const { return ops[kSearch] + ops[kInsert] + ops[kErase] + ops[kRangeQuery]; }
};

template <class TM>
std::unique_ptr<TM> makeTm(const WorkloadSpec& spec, uint32_t threadsNeeded) {
    Config cfg = configFor(spec.tm, spec.base);
    cfg.maxThreads = std::max(cfg.maxThreads, threadsNeeded);
    if constexpr (std::is_same_v<TM, Dctl>) {
        return std::make_unique<Dctl>(cfg, spec.dctlIrrevocableAfter);
    } else {
        return std::make_unique<Multiverse>(cfg);
    }
}

template <class TM>
Mode currentMode(TM& tm) {
    if constexpr (std::is_same_v<TM, Multiverse>) {
        return tm.globalState().mode();
    } else {
        return Mode::Q;
    }
}

template <class TM, template <class> class DS>
class Runner {
public:
    explicit Runner(const WorkloadSpec& spec) : spec_(spec), sched_(spec.schedule()) {
        for (const Interval& iv : sched_) maxUpdaters_ = std::max(maxUpdaters_, iv.updaters);
        tm_ = makeTm<TM>(spec, spec.threads + maxUpdaters_ + 2);
        if constexpr (std::is_same_v<DS<TM>, ds::HashMap<TM>>) {
            ds_ = std::make_unique<DS<TM>>(*tm_, spec.prefill);
        } else {
            ds_ = std::make_unique<DS<TM>>(*tm_);
        }
        if (spec.zipfTheta > 0) zipf_.emplace(spec.zipfTheta, spec.keyRange);
        present_.assign(spec.keyRange + 1, 0);
        deltas_ = std::make_unique<std::atomic<int32_t>[]>(spec.keyRange + 1);
        counters_ = std::make_unique<Counters[]>(spec.threads + maxUpdaters_);
    }

    ~Runner() {
        ds_.reset();
        tm_.reset();
    }

    BenchResult run() {
        prefill();
        BenchResult r;
        std::vector<std::thread> threads;
        std::atomic<uint32_t> ready{0};
        const uint32_t total = spec_.threads + maxUpdaters_;
        for (uint32_t t = 0; t < spec_.threads; ++t) {
            threads.emplace_back([this, t, &ready] { workerLoop(t, ready); });
        }
        for (uint32_t u = 0; u < maxUpdaters_; ++u) {
            threads.emplace_back([this, u, &ready] { updaterLoop(u, ready); });
        }
        while (ready.load() < total) std::this_thread::yield();

        start_ = Clock::now();
        go_.store(true);
        std::thread sampler([this, &r] { samplerLoop(r); });
        std::thread poller([this, &r] { pollerLoop(r); });

        Totals prev = totals();
        double elapsed = 0;
        for (std::size_t i = 0; i < sched_.size(); ++i) {
            interval_.store(static_cast<uint32_t>(i));
            const double startMs = elapsed * 1000;
            elapsed += sched_[i].seconds;
            std::this_thread::sleep_until(start_ + std::chrono::duration<double>(elapsed));
            const Totals now = totals();
            IntervalResult ir{};
            ir.startMs = startMs;
            ir.endMs = msSinceStart();
            ir.ops = now.workerOps() - prev.workerOps();
            ir.rqCommits = now.ops[kRangeQuery] - prev.ops[kRangeQuery];
            ir.updaterOps = now.updaterOps - prev.updaterOps;
            ir.throughput = static_cast<double>(ir.ops) / ((ir.endMs - ir.startMs) / 1000.0);
            r.intervals.push_back(ir);
            prev = now;
        }
        const Totals end = totals();
        r.seconds = msSinceStart() / 1000.0;
        stop_.store(true);
        for (auto& t : threads) t.join();
        sampler.join();
        poller.join();

        for (int i = 0; i < kOpTypes; ++i) r.opCommits[i] = end.ops[i];
        r.workerOps = end.workerOps();
        r.updaterOps = end.updaterOps;
        r.rqCommits = end.ops[kRangeQuery];
        r.throughput = static_cast<double>(r.workerOps) / r.seconds;
        const TmSnapshot snap = snapshot(*tm_);
        r.aborts = snap.aborts;
        r.poisonHits = snap.poisonHits;
        for (const MetricsSample& s : r.samples) r.maxLiveVersionNodes = std::max(r.maxLiveVersionNodes, s.liveVersionNodes);
        fillResidency(r);
        checkEndState(r);
        r.peakRssKb = peakRssKb();
        return r;
    }

private:
    using Tx = typename TM::Tx;

    double msSinceStart() const {
        return std::chrono::duration<double, std::milli>(Clock::now() - start_).count();
    }

    template <class Rng>
    uint64_t drawKey(Rng& rng) const {
        if (zipf_) return (*zipf_)(rng);
        return std::uniform_int_distribution<uint64_t>(1, spec_.keyRange)(rng);
    }

    void prefill() {
        auto th = tm_->registerThread();
        std::mt19937_64 rng(spec_.seed);
        uint64_t n = 0;
        while (n < spec_.prefill) {
            const uint64_t k = std::uniform_int_distribution<uint64_t>(1, spec_.keyRange)(rng);
            if (present_[k]) continue;
            tm_->run(th, [&](Tx& tx) { return ds_->insert(tx, k, k); });
            present_[k] = 1;
            ++n;
        }
    }

    Totals totals() const {
        Totals t;
        for (uint32_t i = 0; i < spec_.threads + maxUpdaters_; ++i) {
            for (int k = 0; k < kOpTypes; ++k) t.ops[k] += counters_[i].ops[k].load(std::memory_order_relaxed);
            t.updaterOps += counters_[i].updaterOps.load(std::memory_order_relaxed);
        }
        return t;
    }

    // A retry after the run ended abandons the operation; it never committed.
    void stopCheck(const Tx& tx) const {
        if (tx.attempts() > 0 && stop_.load(std::memory_order_relaxed)) throw RunStopped{};
    }

    void waitForGo(std::atomic<uint32_t>& ready) {
        ready.fetch_add(1);
        while (!go_.load()) std::this_thread::yield();
    }

    void workerLoop(uint32_t id, std::atomic<uint32_t>& ready) {
        auto th = tm_->registerThread();
        std::mt19937_64 rng(spec_.seed * 1000003 + id + 1);
        std::uniform_real_distribution<double> pct(0.0, 100.0);
        std::vector<uint64_t> out;
        Counters& c = counters_[id];
        waitForGo(ready);
        while (!stop_.load(std::memory_order_relaxed)) try {
            // Parameters are fixed before the first attempt so that an
            // operation straddling an interval boundary retries unchanged.
            const Interval& iv = sched_[interval_.load(std::memory_order_relaxed)];
            const double p = pct(rng);
            const uint64_t k = drawKey(rng);
            if (p < iv.mix.search) {
                tm_->run(th, [&](Tx& tx) { return stopCheck(tx), ds_->contains(tx, k); });
                c.ops[kSearch].fetch_add(1, std::memory_order_relaxed);
            } else if (p < iv.mix.search + iv.mix.insert) {
                if (tm_->run(th, [&](Tx& tx) { return stopCheck(tx), ds_->insert(tx, k, k); })) deltas_[k].fetch_add(1);
                c.ops[kInsert].fetch_add(1, std::memory_order_relaxed);
            } else if (p < iv.mix.search + iv.mix.insert + iv.mix.erase) {
                if (tm_->run(th, [&](Tx& tx) { return stopCheck(tx), ds_->erase(tx, k); })) deltas_[k].fetch_add(-1);
                c.ops[kErase].fetch_add(1, std::memory_order_relaxed);
            } else {
                const uint64_t hi = k + iv.rqSize;
                tm_->run(
                    th,
                    [&](Tx& tx) {
                        stopCheck(tx);
                        if constexpr (std::is_same_v<DS<TM>, ds::HashMap<TM>>) {
                            return ds_->size(tx);
                        } else {
                            return ds_->rangeQuery(tx, k, hi);
                        }
                    },
                    TxHint::ReadOnly);
                c.ops[kRangeQuery].fetch_add(1, std::memory_order_relaxed);
            }
        } catch (const RunStopped&) {
            break;
        }
    }

    void updaterLoop(uint32_t id, std::atomic<uint32_t>& ready) {
        auto th = tm_->registerThread();
        std::mt19937_64 rng(spec_.seed * 7777 + id + 1);
        Counters& c = counters_[spec_.threads + id];
        waitForGo(ready);
        while (!stop_.load(std::memory_order_relaxed)) try {
            if (id >= sched_[interval_.load(std::memory_order_relaxed)].updaters) {
                std::this_thread::sleep_for(std::chrono::milliseconds(1));
                continue;
            }
            const uint64_t k = drawKey(rng);
            const uint64_t v = rng();
            if (tm_->run(th, [&](Tx& tx) { return stopCheck(tx), ds_->upsert(tx, k, v); }, TxHint::Update)) {
                deltas_[k].fetch_add(1);
            }
            c.updaterOps.fetch_add(1, std::memory_order_relaxed);
        } catch (const RunStopped&) {
            break;
        }
    }

    void samplerLoop(BenchResult& r) {
        Totals prev = totals();
        uint64_t prevAborts = snapshot(*tm_).aborts;
        auto next = start_;
        while (!stop_.load()) {
            next += std::chrono::milliseconds(spec_.sampleMs);
            while (Clock::now() < next && !stop_.load()) std::this_thread::sleep_for(std::chrono::milliseconds(5));
            if (stop_.load()) break;
            const Totals now = totals();
            const TmSnapshot snap = snapshot(*tm_);
            MetricsSample s{};
            s.elapsedMs = static_cast<uint64_t>(msSinceStart());
            s.updaters = sched_[interval_.load()].updaters;
            s.ops = now.workerOps() - prev.workerOps();
            s.rqCommits = now.ops[kRangeQuery] - prev.ops[kRangeQuery];
            s.aborts = snap.aborts - prevAborts;
            s.mode = snap.mode;
            s.liveVersionNodes = snap.liveVersionNodes;
            s.rssKb = currentRssKb();
            r.samples.push_back(s);
            prev = now;
            prevAborts = snap.aborts;
        }
    }

    void pollerLoop(BenchResult& r) {
        Mode last = currentMode(*tm_);
        r.modeTimeline.push_back({0, last});
        if constexpr (!std::is_same_v<TM, Multiverse>) return;
        while (!stop_.load()) {
            std::this_thread::sleep_for(std::chrono::milliseconds(1));
            const Mode m = currentMode(*tm_);
            if (m != last) {
                r.modeTimeline.push_back({msSinceStart(), m});
                last = m;
            }
        }
    }

    void fillResidency(BenchResult& r) const {
        const auto& tl = r.modeTimeline;
        for (IntervalResult& ir : r.intervals) {
            for (std::size_t i = 0; i < tl.size(); ++i) {
                const double a = std::max(tl[i].ms, ir.startMs);
                const double b = std::min(i + 1 < tl.size() ? tl[i + 1].ms : ir.endMs, ir.endMs);
                if (b > a) ir.modeResidency[static_cast<int>(tl[i].mode)] += b - a;
            }
            for (double& f : ir.modeResidency) f /= ir.endMs - ir.startMs;
        }
    }

    void checkEndState(BenchResult& r) const {
        std::vector<uint8_t> expect(spec_.keyRange + 1, 0);
        uint64_t bad = 0;
        for (uint64_t k = 1; k <= spec_.keyRange; ++k) {
            const int64_t e = present_[k] + deltas_[k].load();
            if (e != 0 && e != 1) ++bad;
            expect[k] = e == 1;
        }
        const std::vector<uint64_t> keys = ds_->keysUnsafe();
        uint64_t found = 0;
        for (std::size_t i = 0; i < keys.size(); ++i) {
            const uint64_t k = keys[i];
            if (k == 0 || k > spec_.keyRange || (i > 0 && keys[i - 1] >= k) || !expect[k]) {
                ++bad;
            } else {
                ++found;
            }
        }
        const uint64_t expected = static_cast<uint64_t>(std::count(expect.begin(), expect.end(), 1));
        if (found != expected) ++bad;
        r.endStateOk = bad == 0;
        std::ostringstream msg;
        msg << keys.size() << " keys present, " << expected << " expected from the committed log, " << bad
            << " mismatches";
        r.endStateMessage = msg.str();
    }

    const WorkloadSpec& spec_;
    std::vector<Interval> sched_;
    uint32_t maxUpdaters_{0};
    std::unique_ptr<TM> tm_;
    std::unique_ptr<DS<TM>> ds_;
    std::optional<ZipfGenerator> zipf_;
    std::vector<uint8_t> present_;
    std::unique_ptr<std::atomic<int32_t>[]> deltas_;
    std::unique_ptr<Counters[]> counters_;
    std::atomic<uint32_t> interval_{0};
    std::atomic<bool> go_{false};
    std::atomic<bool> stop_{false};
    Clock::time_point start_;
};

template <class TM>
BenchResult runWithTm(const WorkloadSpec& spec) {
    switch (spec.ds) {
        case DsKind::List: return Runner<TM, ds::SortedList>(spec).run();
        case DsKind::ExtBst: return Runner<TM, ds::ExtBst>(spec).run();
        case DsKind::HashMap: return Runner<TM, ds::HashMap>(spec).run();
        case DsKind::AbTree: return Runner<TM, ds::AbTree>(spec).run();
    }
    throw std::invalid_argument("unknown data structure");
}

}  // namespace

BenchResult runBenchmark(const WorkloadSpec& spec) {
    spec.validate();
    if (spec.tm == TmKind::Dctl) return runWithTm<Dctl>(spec);
    return runWithTm<Multiverse>(spec);
}

}  // namespace mv
