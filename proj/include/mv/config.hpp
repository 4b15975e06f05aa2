#pragma once

#include <chrono>
#include <cstdint>
#include <string>

namespace mv {

// Tunables for mode switching and unversioning.
struct HeuristicParams {
    uint32_t k1 = 100;  // aborts before a read-only operation goes versioned
    uint32_t k2 = 16;   // aborts before a conditional Q -> QtoU CAS
    uint32_t k3 = 28;   // aborts before an unconditional CAS by a versioned reader
    uint32_t s = 10;    // consecutive small commits that clear the sticky bit
    uint32_t l = 10;    // delta samples per threshold recomputation
    double p = 0.10;    // prefix fraction of the sorted samples that is averaged
    std::chrono::milliseconds scanPeriod{10};

    // Throws std::invalid_argument when a field is out of range.
    void validate() const;
};

enum class FixedMode { Adaptive, QOnly, UOnly };

struct Config {
    uint32_t tableBits = 20;
    uint32_t maxThreads = 128;
    HeuristicParams heuristics;
    FixedMode fixedMode = FixedMode::Adaptive;

    // Reclamation knobs. Poisoning overwrites reclaimed objects and keeps
    // their storage quarantined so stale reads are detectable instead of UB.
    bool ebrPoison = false;
    // Fault injection for validating the test suites themselves.
    bool faultDisableEbr = false;
    bool faultSkipReadSetValidation = false;

    std::size_t tableSize() const { return std::size_t{1} << tableBits; }

    void validate() const;

    // Applies MV_TABLE_BITS, MV_MAX_THREADS, MV_K1, MV_K2, MV_K3, MV_S, MV_L,
    // MV_P, MV_SCAN_MS and MV_EBR_POISON on top of `base`.
    static Config fromEnv(Config base);
    static Config fromEnv() { return fromEnv(Config{}); }
};

}  // namespace mv
