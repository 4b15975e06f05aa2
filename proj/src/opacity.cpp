#include "mv/opacity.hpp"

#include <limits>
#include <optional>
#include <stdexcept>
#include <unordered_map>

namespace mv {

namespace {

constexpr uint64_t kOpen = std::numeric_limits<uint64_t>::max();

struct Op {
    bool write;
    std::size_t cell;
    Word value;
};

struct Attempt {
    uint64_t txn;
    uint32_t attempt;
    uint64_t beginSeq;
    uint64_t endSeq{kOpen};
    bool committed{false};
    std::vector<Op> ops;
};

using State = std::vector<Word>;

bool readsConsistent(const Attempt& a, const State& s) {
    std::vector<std::optional<Word>> own(s.size());
    for (const Op& op : a.ops) {
        if (op.write) {
            own[op.cell] = op.value;
        } else if (op.value != own[op.cell].value_or(s[op.cell])) {
            return false;
        }
    }
    return true;
}

void applyWrites(const Attempt& a, State& s) {
    for (const Op& op : a.ops) {
        if (op.write) s[op.cell] = op.value;
    }
}

class Search {
public:
    Search(std::vector<Attempt> committed, std::vector<Attempt> aborted, State initial)
        : c_(std::move(committed)), a_(std::move(aborted)) {
        const std::size_t n = c_.size();
        mustPrecede_.assign(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i != j && c_[j].endSeq < c_[i].beginSeq) mustPrecede_[i] |= 1u << j;
            }
        }
        states_.push_back(std::move(initial));
    }

    OpacityVerdict run() {
        OpacityVerdict v;
        if (dfs(0)) {
            for (std::size_t i : order_) v.witness.push_back(c_[i].txn);
            return v;
        }
        v.status = OpacityVerdict::Status::Violation;
        if (!anyCommittedOrder_) {
            v.message = "no real-time-respecting serialization explains the committed reads";
        } else {
            v.message = "aborted attempt (txn " + std::to_string(lastFailedTxn_) + ", attempt " +
                        std::to_string(lastFailedAttempt_) + ") observed a state no serialization point explains";
        }
        return v;
    }

private:
    bool dfs(uint32_t used) {
        if (order_.size() == c_.size()) {
            anyCommittedOrder_ = true;
            return abortedFit(used);
        }
        for (std::size_t i = 0; i < c_.size(); ++i) {
            const uint32_t bit = 1u << i;
            if ((used & bit) != 0 || (mustPrecede_[i] & ~used) != 0) continue;
            if (!readsConsistent(c_[i], states_.back())) continue;
            State next = states_.back();
            applyWrites(c_[i], next);
            order_.push_back(i);
            states_.push_back(std::move(next));
            if (dfs(used | bit)) return true;
            states_.pop_back();
            order_.pop_back();
        }
        return false;
    }

    bool abortedFit(uint32_t) {
        for (const Attempt& a : a_) {
            bool fits = false;
            for (std::size_t k = 0; k <= order_.size() && !fits; ++k) {
                bool inWindow = true;
                uint32_t prefix = 0;
                for (std::size_t p = 0; p < k; ++p) {
                    prefix |= 1u << order_[p];
                    if (c_[order_[p]].beginSeq > a.endSeq) inWindow = false;
                }
                for (std::size_t j = 0; j < c_.size() && inWindow; ++j) {
                    if (c_[j].endSeq < a.beginSeq && (prefix & (1u << j)) == 0) inWindow = false;
                }
                fits = inWindow && readsConsistent(a, states_[k]);
            }
            if (!fits) {
                lastFailedTxn_ = a.txn;
                lastFailedAttempt_ = a.attempt;
                return false;
            }
        }
        return true;
    }

    std::vector<Attempt> c_;
    std::vector<Attempt> a_;
    std::vector<uint32_t> mustPrecede_;
    std::vector<std::size_t> order_;
    std::vector<State> states_;
    bool anyCommittedOrder_{false};
    uint64_t lastFailedTxn_{0};
    uint32_t lastFailedAttempt_{0};
};

}  // namespace

OpacityVerdict checkOpacity(const History& h, const std::map<uint64_t, Word>& initial, OpacityLimits limits) {
    std::vector<Attempt> attempts;
    std::map<std::pair<uint64_t, uint32_t>, std::size_t> index;
    std::unordered_map<uint64_t, std::size_t> cells;
    std::vector<uint64_t> cellIds;
    auto cellIndex = [&](uint64_t id) {
        auto [it, fresh] = cells.emplace(id, cellIds.size());
        if (fresh) cellIds.push_back(id);
        return it->second;
    };

    for (const HistoryEvent& e : h) {
        const auto key = std::make_pair(e.txn, e.attempt);
        if (e.kind == EventKind::Begin) {
            if (!index.emplace(key, attempts.size()).second) {
                throw std::invalid_argument("duplicate begin for txn " + std::to_string(e.txn));
            }
            attempts.push_back({e.txn, e.attempt, e.seq, kOpen, false, {}});
            continue;
        }
        auto it = index.find(key);
        if (it == index.end()) throw std::invalid_argument("event before begin for txn " + std::to_string(e.txn));
        Attempt& a = attempts[it->second];
        if (a.endSeq != kOpen) throw std::invalid_argument("event after end for txn " + std::to_string(e.txn));
        switch (e.kind) {
            case EventKind::Read: a.ops.push_back({false, cellIndex(e.cell), e.value}); break;
            case EventKind::Write: a.ops.push_back({true, cellIndex(e.cell), e.value}); break;
            case EventKind::Commit:
                a.endSeq = e.seq;
                a.committed = true;
                break;
            case EventKind::Abort: a.endSeq = e.seq; break;
            case EventKind::Begin: break;
        }
    }

    std::vector<Attempt> committed;
    std::vector<Attempt> aborted;
    std::map<uint64_t, int> commitsPerTxn;
    for (Attempt& a : attempts) {
        if (a.committed) {
            if (++commitsPerTxn[a.txn] > 1) {
                throw std::invalid_argument("txn " + std::to_string(a.txn) + " committed twice");
            }
            committed.push_back(std::move(a));
        } else {
            aborted.push_back(std::move(a));
        }
    }

    OpacityVerdict v;
    if (committed.size() > limits.maxCommitted || committed.size() > 31 || cellIds.size() > limits.maxCells) {
        v.status = OpacityVerdict::Status::SizeExceeded;
        v.message = std::to_string(committed.size()) + " committed transactions over " +
                    std::to_string(cellIds.size()) + " cells exceeds the search bound";
        return v;
    }
    State init(cellIds.size(), 0);
    for (std::size_t i = 0; i < cellIds.size(); ++i) {
        auto it = initial.find(cellIds[i]);
        if (it != initial.end()) init[i] = it->second;
    }
    return Search(std::move(committed), std::move(aborted), std::move(init)).run();
}

}  // namespace mv
