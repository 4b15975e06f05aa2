#pragma once

// Randomized opacity stress: worker threads run small random transactions
// over a handful of cells in barrier-separated windows. Each window's
// recorded history is handed to checkOpacity with the in-place cell values
// captured at the window start as the initial state.

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mv/history.hpp"
#include "mv/opacity.hpp"
#include "mv/tm.hpp"

namespace mv {

struct StressOptions {
    uint32_t threads = 2;
    uint32_t cells = 4;
    uint32_t txnsPerThread = 4;  // threads * txnsPerThread must stay within the checker bound
    uint32_t windows = 1000;
    // K1 = K2 = K3 = 1 plus a thread that keeps requesting Mode U.
    bool forceModeCycling = false;
    // Fault injection: writers skip read-set revalidation at commit.
    bool mutation = false;
    bool stopOnViolation = false;
    uint64_t seed = 1;
};

struct StressReport {
    uint64_t windows{0};
    uint64_t violations{0};
    uint64_t sizeExceeded{0};
    uint64_t firstViolationWindow{0};  // 1-based; 0 when none
    std::string firstViolation;
    History firstViolationHistory;
    uint64_t commits{0};
    uint64_t aborts{0};
    uint64_t versionedCommits{0};
    uint64_t modeCycles{0};
};

namespace detail {

inline Config stressConfig(const StressOptions& o) {
    Config c;
    c.tableBits = 10;
    c.maxThreads = o.threads + 1;
    c.faultSkipReadSetValidation = o.mutation;
    if (o.forceModeCycling) {
        c.heuristics.k1 = 1;
        c.heuristics.k2 = 1;
        c.heuristics.k3 = 1;
        c.heuristics.s = 2;
        c.heuristics.l = 4;
        c.heuristics.scanPeriod = std::chrono::milliseconds(1);
    }
    return c;
}

template <class Tx, class Rng>
void stressBody(Tx& tx, Cell* cells, uint32_t n, bool update, Rng& rng, uint64_t& nextValue) {
    auto maybeYield = [&] {
        if (rng() % 3 == 0) std::this_thread::yield();
    };
    std::vector<uint32_t> order(n);
    for (uint32_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const uint32_t reads = update ? 1 + rng() % (n / 2) : 2 + rng() % (n - 1);
    for (uint32_t i = 0; i < reads && i < n; ++i) {
        (void)tx.read(cells[order[i]]);
        maybeYield();
    }
    if (!update) return;
    // Writes go to cells the transaction did not read, so lost validation
    // shows up as write skew.
    const uint32_t writes = 1 + rng() % (n - reads);
    for (uint32_t i = 0; i < writes; ++i) {
        tx.write(cells[order[reads + i]], nextValue++);
        maybeYield();
    }
}

}  // namespace detail

template <class TM>
StressReport stressAndCheck(const StressOptions& o) {
    if (o.cells < 2 || o.threads == 0 || o.threads * o.txnsPerThread > OpacityLimits{}.maxCommitted) {
        throw std::invalid_argument("stress options exceed the opacity checker bound");
    }
    TM tm(detail::stressConfig(o));
    HistoryRecorder recorder(o.threads + 1);
    tm.setRecorder(&recorder);
    auto cells = std::make_unique<Cell[]>(o.cells);

    std::atomic<bool> done{false};
    std::barrier sync(o.threads + 1);
    std::vector<std::thread> workers;
    for (uint32_t t = 0; t < o.threads; ++t) {
        workers.emplace_back([&, t] {
            auto th = tm.registerThread();
            std::mt19937_64 rng(o.seed * 7919 + t);
            uint64_t nextValue = (uint64_t{t} + 1) << 48;
            for (;;) {
                sync.arrive_and_wait();
                if (done.load()) break;
                for (uint32_t i = 0; i < o.txnsPerThread; ++i) {
                    const bool update = rng() % 2 == 0;
                    tm.run(th, [&](typename TM::Tx& tx) {
                        detail::stressBody(tx, cells.get(), o.cells, update, rng, nextValue);
                    });
                }
                sync.arrive_and_wait();
            }
        });
    }
    std::thread cycler;
    if constexpr (std::is_same_v<TM, Multiverse>) {
        if (o.forceModeCycling) {
            cycler = std::thread([&] {
                while (!done.load()) {
                    tm.requestModeU();
                    std::this_thread::sleep_for(std::chrono::microseconds(300));
                }
            });
        }
    }

    StressReport rep;
    for (uint32_t w = 0; w < o.windows; ++w) {
        std::map<uint64_t, Word> initial;
        for (uint32_t i = 0; i < o.cells; ++i) {
            initial[reinterpret_cast<uintptr_t>(&cells[i])] = cells[i].unsafeLoad();
        }
        recorder.clear();
        sync.arrive_and_wait();
        sync.arrive_and_wait();
        ++rep.windows;
        const OpacityVerdict v = checkOpacity(recorder.collect(), initial);
        if (v.status == OpacityVerdict::Status::SizeExceeded) {
            ++rep.sizeExceeded;
        } else if (!v.ok()) {
            if (rep.violations++ == 0) {
                rep.firstViolationWindow = w + 1;
                rep.firstViolation = v.message;
                rep.firstViolationHistory = recorder.collect();
            }
            if (o.stopOnViolation) break;
        }
    }
    done.store(true);
    sync.arrive_and_wait();
    for (auto& t : workers) t.join();
    if (cycler.joinable()) cycler.join();
    tm.setRecorder(nullptr);

    const TmSnapshot s = snapshot(tm);
    rep.commits = s.commits;
    rep.aborts = s.aborts;
    rep.versionedCommits = s.versionedCommits;
    rep.modeCycles = s.modeCycles;
    return rep;
}

}  // namespace mv
