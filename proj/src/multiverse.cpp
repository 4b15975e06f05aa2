#include "mv/multiverse.hpp"

#include <cassert>
#include <thread>

namespace mv {

namespace {

Config validated(Config c) {
    c.validate();
    return c;
}

}  // namespace

TxCounters Multiverse::Tx::counters() const {
    return {commits_.load(std::memory_order_relaxed), aborts_.load(std::memory_order_relaxed),
            roCommits_.load(std::memory_order_relaxed), versionedCommits_.load(std::memory_order_relaxed),
            casAttempts_.load(std::memory_order_relaxed)};
}

Multiverse::Multiverse(Config cfg)
    : cfg_(validated(cfg)),
      g_(cfg_.maxThreads + 1, cfg_.fixedMode == FixedMode::UOnly ? 2 : 0),
      locks_(cfg_.tableBits),
      ebr_(cfg_.maxThreads + 1, cfg_.ebrPoison, cfg_.faultDisableEbr),
      vs_(cfg_.tableBits, ebr_) {
    if (cfg_.fixedMode == FixedMode::UOnly) g_.setFirstObsModeUTs(1);
    txs_.reserve(cfg_.maxThreads);
    for (ThreadId t = 0; t < cfg_.maxThreads; ++t) {
        txs_.emplace_back(new Tx(this, t, cfg_.heuristics.s));
    }
    // Unversioning only happens in Mode Q, so a U-only runtime has nothing
    // for the background thread to do.
    if (cfg_.fixedMode != FixedMode::UOnly) {
        controller_ = std::make_unique<ModeController>(g_, locks_, vs_, ebr_, cfg_.heuristics, cfg_.maxThreads);
        controller_->start();
    }
}

Multiverse::~Multiverse() {
    if (controller_) controller_->stop();
    // Reclaim hooks still need the tables.
    ebr_.drainAll(0);
}

Multiverse::ThreadHandle Multiverse::registerThread() {
    const ThreadId tid = g_.claimSlot(cfg_.maxThreads);
    Tx& tx = *txs_[tid];
    tx.tracker_ = SmallTxnTracker(cfg_.heuristics.s);
    tx.lastRelease_ = 0;
    return ThreadHandle(this, tid);
}

void Multiverse::ThreadHandle::release() {
    if (tm_ == nullptr) return;
    assert(!tx().active() && "deregistering inside a transaction");
    tm_->ebr_.detach(tid_);
    tm_->g_.releaseSlot(tid_);
    tm_ = nullptr;
}

bool Multiverse::requestModeU() {
    if (cfg_.fixedMode != FixedMode::Adaptive) return false;
    const uint64_t c = g_.modeCounter();
    return getMode(c) == Mode::Q && g_.casModeCounter(c);
}

void Multiverse::startOperation(Tx& tx, TxHint hint) {
    if (tx.active_) throw std::logic_error("nested transactions are not supported");
    tx.hint_ = hint;
    tx.attempts_ = 0;
    tx.versioned_ = false;
    tx.pinnedUnversioned_ = hint == TxHint::Update;
    tx.initialVersionedTs_ = kInvalidTs;
    tx.txnId_ = recorder_ != nullptr ? recorder_->newTxnId() : 0;
}

void Multiverse::begin(Tx& tx) {
    const ThreadId tid = tx.tid_;
    tx.active_ = true;
    ebr_.enter(tid);
    tx.localCounter_ = g_.announceBegin(tid, tx.tracker_.sticky());
    tx.localMode_ = getMode(tx.localCounter_);
    if (recorder_ != nullptr) recorder_->begin(tid, tx.txnId_, tx.attempts_);

    Timestamp r = g_.clock.read();
    if (r == tx.lastRelease_) {
        // Our own previous commit or abort released its locks at r; move
        // past it so this attempt can read those slots.
        g_.clock.advancePast(r);
        r = g_.clock.read();
    }
    tx.rClock_ = r;

    tx.readCnt_ = 0;
    tx.readOnly_ = true;
    tx.wroteWhileVersioned_ = false;
    tx.readSet_.clear();
    tx.undo_.clear();
    tx.lockedSlots_.clear();
    tx.versionedWrites_.clear();
    tx.nodeFrees_.clear();
    tx.userFrees_.clear();
    tx.allocs_.clear();
    if (tx.versioned_ && tx.initialVersionedTs_ == kInvalidTs) tx.initialVersionedTs_ = r;
}

void Multiverse::abortTx(Tx&) { throw TxAbort{}; }

void Multiverse::checkPoison(Tx& tx, Word v) {
    if (ebr_.poisoning() && v == kPoisonWord) {
        ebr_.notePoisonHit();
        abortTx(tx);
    }
}

Word Multiverse::read(Tx& tx, const Cell& c) {
    assert(tx.active_);
    ++tx.readCnt_;
    const SlotIndex s = locks_.slotFor(&c);
    Word v;
    if (!tx.versioned_) {
        v = unversionedRead(tx, c, s);
    } else if (tx.localMode_ == Mode::U) {
        v = modeUVersionedRead(tx, c, s);
    } else {
        v = modeQVersionedRead(tx, c, s);
    }
    if (recorder_ != nullptr) recorder_->read(tx.tid_, &c, v);
    return v;
}

Word Multiverse::unversionedRead(Tx& tx, const Cell& c, SlotIndex s) {
    const Word data = c.word.load(std::memory_order_acquire);
    checkPoison(tx, data);
    const LockWord w = locks_.readLockWaitFlag(s);
    if (!validateLock(w, tx.rClock_, tx.tid_)) abortTx(tx);
    tx.readSet_.push_back(s);
    return data;
}

Word Multiverse::traverseOrAbort(Tx& tx, const VersionList& l) {
    const TraverseResult r = vs_.traverse(l, tx.rClock_);
    if (r.status == TraverseResult::Status::Poisoned) {
        ebr_.notePoisonHit();
        abortTx(tx);
    }
    if (!r.found()) abortTx(tx);
    return r.value;
}

Word Multiverse::modeQVersionedRead(Tx& tx, const Cell& c, SlotIndex s) {
    if (!vs_.bloomTryAdd(s, &c)) {
        if (const VersionList* l = vs_.tryGetVList(s, &c)) return traverseOrAbort(tx, *l);
    }
    return versionThenRead(tx, c, s);
}

Word Multiverse::versionThenRead(Tx& tx, const Cell& c, SlotIndex s) {
    const LockWord prior = locks_.lockAndFlag(s, tx.tid_);
    if (const VersionList* l = vs_.tryGetVList(s, &c)) {
        // Someone versioned it while we waited for the lock.
        locks_.unlock(s, prior.version());
        return traverseOrAbort(tx, *l);
    }
    const Word data = c.word.load(std::memory_order_relaxed);
    if (ebr_.poisoning() && data == kPoisonWord) {
        locks_.unlock(s, prior.version());
        checkPoison(tx, data);
    }
    const Timestamp fo = g_.firstObsModeUTs();
    vs_.createVersionList(s, &c, fo != kInvalidTs ? fo : prior.version(), data);
    // Nothing was written, so the version stays put.
    locks_.unlock(s, prior.version());
    if (!validateLock(prior, tx.rClock_, tx.tid_)) abortTx(tx);
    return data;
}

Word Multiverse::modeUVersionedRead(Tx& tx, const Cell& c, SlotIndex s) {
    bool didRetry = false;
    Timestamp lastVer = 0;
    Word lastVal = 0;
    for (;;) {
        if (vs_.bloomContains(s, &c)) {
            if (const VersionList* l = vs_.tryGetVList(s, &c)) return traverseOrAbort(tx, *l);
        }
        // Unversioned: nobody has written it since Mode U began, as long as
        // no writer slips in between the check above and these loads.
        const Word val = c.word.load(std::memory_order_acquire);
        checkPoison(tx, val);
        const LockWord w = locks_.load(s);
        const Timestamp fo = g_.firstObsModeUTs();
        const bool validVer = w.version() < tx.rClock_ || (fo != kInvalidTs && fo < tx.rClock_);
        if (didRetry) {
            if (w.version() != lastVer) return lastVal;  // a colliding cell held the lock
            if (w.locked() && validVer && val == lastVal) return lastVal;
            if (!w.locked() && validVer) return lastVal;
            abortTx(tx);
        }
        if (!w.locked()) {
            if (validVer) return val;
            abortTx(tx);
        }
        lastVer = w.version();
        lastVal = val;
        didRetry = true;
    }
}

void Multiverse::write(Tx& tx, Cell& c, Word v) {
    assert(tx.active_);
    if (tx.hint_ == TxHint::ReadOnly) throw std::logic_error("write inside a read-only transaction");
    if (tx.versioned_) {
        // Writers are never versioned; retry this operation unversioned.
        tx.wroteWhileVersioned_ = true;
        abortTx(tx);
    }
    tx.readOnly_ = false;
    const SlotIndex s = locks_.slotFor(&c);
    const LockWord w = locks_.readLockWaitFlag(s);
    if (!validateLock(w, tx.rClock_, tx.tid_)) abortTx(tx);
    if (!w.locked()) {
        if (!locks_.tryLock(s, w, tx.tid_)) abortTx(tx);
        tx.lockedSlots_.push_back(s);
    }
    const Word old = c.word.load(std::memory_order_relaxed);
    tx.undo_.push_back({&c, old});

    // Version-list work precedes the in-place store: a Mode U reader that
    // finds the cell unversioned relies on the in-place value being older.
    if (tx.localMode_ == Mode::Q) {
        if (vs_.anyVersioned() && vs_.bloomContains(s, &c)) {
            if (VersionList* l = vs_.tryGetVList(s, &c)) versionedWrite(tx, *l, v);
        }
    } else {
        VersionList* l = vs_.bloomContains(s, &c) ? vs_.tryGetVList(s, &c) : nullptr;
        if (l == nullptr) {
            const Timestamp fo = g_.firstObsModeUTs();
            l = vs_.createVersionList(s, &c, fo != kInvalidTs ? fo : w.version(), old);
        }
        versionedWrite(tx, *l, v);
    }
    c.word.store(v, std::memory_order_release);
    if (recorder_ != nullptr) recorder_->write(tx.tid_, &c, v);
}

void Multiverse::versionedWrite(Tx& tx, VersionList& l, Word v) {
    if (VersionNode* superseded = vs_.appendTBD(l, tx.rClock_, v)) {
        tx.versionedWrites_.push_back(&l);
        tx.nodeFrees_.push_back(superseded);
    }
}

void Multiverse::commit(Tx& tx) {
    const ThreadId tid = tx.tid_;
    if (tx.readOnly_) {
        if (tx.versioned_) {
            const Timestamp now = g_.clock.read();
            g_.announcement(tid).commitTsDelta.store(now - tx.initialVersionedTs_, std::memory_order_release);
            if (tx.localMode_ == Mode::U) g_.updateMinModeUReadCount(tx.readCnt_);
            tx.versionedCommits_.fetch_add(1, std::memory_order_relaxed);
        }
        tx.roCommits_.fetch_add(1, std::memory_order_relaxed);
    } else {
        if (!cfg_.faultSkipReadSetValidation) {
            for (SlotIndex s : tx.readSet_) {
                if (!validateLock(locks_.readLockWaitFlag(s), tx.rClock_, tid)) abortTx(tx);
            }
        }
        const Timestamp c = g_.clock.read();
        for (VersionList* l : tx.versionedWrites_) vs_.resolveTBD(*l, c);
        for (SlotIndex s : tx.lockedSlots_) locks_.unlock(s, c);
        if (!tx.versionedWrites_.empty()) {
            // Readers that start at c skip the versions we just published and
            // need the ones we are about to retire; keep them out of our grace
            // period by moving the clock first.
            g_.clock.advancePast(c);
        }
        for (VersionNode* n : tx.nodeFrees_) vs_.retireNode(tid, n);
        for (const Retired& r : tx.userFrees_) ebr_.retire(tid, r);
        tx.lastRelease_ = c;
    }
    tx.allocs_.clear();

    const bool wasSticky = tx.tracker_.sticky();
    tx.tracker_.onCommit(tx.versioned_, tx.readCnt_);
    if (wasSticky && !tx.tracker_.sticky()) g_.announcement(tid).sticky.store(false, std::memory_order_seq_cst);
    tx.commits_.fetch_add(1, std::memory_order_relaxed);
    if (recorder_ != nullptr) recorder_->commit(tid);
    finish(tx);
}

void Multiverse::rollback(Tx& tx) {
    const ThreadId tid = tx.tid_;
    for (auto it = tx.undo_.rbegin(); it != tx.undo_.rend(); ++it) {
        it->cell->word.store(it->old, std::memory_order_release);
    }
    for (auto it = tx.versionedWrites_.rbegin(); it != tx.versionedWrites_.rend(); ++it) vs_.rollbackTBD(**it, tid);
    tx.nodeFrees_.clear();
    tx.userFrees_.clear();
    for (const Retired& r : tx.allocs_) ebr_.retire(tid, r);
    tx.allocs_.clear();
    const Timestamp next = g_.clock.increment();
    if (!tx.lockedSlots_.empty()) tx.lastRelease_ = next;
    for (SlotIndex s : tx.lockedSlots_) locks_.unlock(s, next);
    tx.lockedSlots_.clear();
    tx.versionedWrites_.clear();
    tx.undo_.clear();
}

void Multiverse::finish(Tx& tx) {
    g_.announceInactive(tx.tid_);
    ebr_.exit(tx.tid_);
    tx.active_ = false;
}

void Multiverse::abortAttempt(Tx& tx) {
    rollback(tx);
    tx.aborts_.fetch_add(1, std::memory_order_relaxed);
    if (recorder_ != nullptr) recorder_->abort(tx.tid_);
    finish(tx);

    ++tx.attempts_;
    const HeuristicParams& h = cfg_.heuristics;
    if (tx.wroteWhileVersioned_) {
        tx.versioned_ = false;
        tx.pinnedUnversioned_ = true;
    } else if (tx.readOnly_ && !tx.pinnedUnversioned_) {
        if (tx.localMode_ == Mode::Q && cfg_.fixedMode == FixedMode::Adaptive &&
            shouldAttemptModeCas(h, tx.attempts_, tx.readCnt_, tx.versioned_, g_.minModeUReadCount())) {
            tx.casAttempts_.fetch_add(1, std::memory_order_relaxed);
            g_.casModeCounter(tx.localCounter_);
            tx.tracker_.onCasAttempt();
            g_.announcement(tx.tid_).sticky.store(true, std::memory_order_seq_cst);
        }
        tx.versioned_ = shouldSwitchToVersioned(h, tx.attempts_, tx.versioned_);
    }
    if (tx.attempts_ > 1) std::this_thread::yield();
}

void Multiverse::cancel(Tx& tx) {
    rollback(tx);
    if (recorder_ != nullptr) recorder_->abort(tx.tid_);
    finish(tx);
}

void Multiverse::unversionHook(void* obj, std::size_t bytes, void* ctx, ThreadId by) {
    static_cast<Multiverse*>(ctx)->unversionObject(obj, bytes, by);
}

void Multiverse::unversionObject(const void* obj, std::size_t bytes, ThreadId by) {
    if (!vs_.anyVersioned()) return;
    const auto* base = static_cast<const char*>(obj);
    for (std::size_t off = 0; off + sizeof(Word) <= bytes; off += sizeof(Word)) {
        const void* cell = base + off;
        const SlotIndex s = locks_.slotFor(cell);
        if (!vs_.bloomContains(s, cell)) continue;
        const LockWord prior = locks_.lockAndFlag(s, by);
        vs_.unversionCell(s, cell, by);
        locks_.unlock(s, prior.version());
    }
}

void Multiverse::forgetUnsafe(const void* p, std::size_t bytes) {
    ThreadHandle th = registerThread();
    unversionObject(p, bytes, th.tid());
}

MultiverseStats Multiverse::stats() const {
    MultiverseStats st{};
    const uint64_t counter = g_.modeCounter();
    st.mode = getMode(counter);
    st.modeCounter = counter;
    st.clock = g_.clock.read();
    st.minModeUReadCount = g_.minModeUReadCount();
    const VersionStoreStats vss = vs_.stats();
    st.liveVersionNodes = vss.liveVersionNodes;
    st.versionedCells = vss.linkedLists;
    st.poisonHits = ebr_.poisonHits();
    st.unversionThreshold = UnversionSampler::kNoThreshold;
    if (controller_) {
        const ModeControllerStats mc = controller_->stats();
        st.unversionThreshold = mc.threshold;
        st.modeCycles = mc.cycles;
        st.bucketsUnversioned = mc.bucketsUnversioned;
    }
    for (const auto& tx : txs_) {
        const TxCounters c = tx->counters();
        st.tx.commits += c.commits;
        st.tx.aborts += c.aborts;
        st.tx.readOnlyCommits += c.readOnlyCommits;
        st.tx.versionedCommits += c.versionedCommits;
        st.tx.modeCasAttempts += c.modeCasAttempts;
    }
    return st;
}

}  // namespace mv
