#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <utility>
#include <vector>

namespace sadi::detail {

// Comparator schedule that routes the middle order statistics of H values to
// two fixed wires. Built once per head count, then replayed elementwise over
// whole token tiles, so the median kernel runs on contiguous rows instead of
// strided per-token gathers.
//
// Construction: Batcher odd-even mergesort over wires = bit_ceil(H), pruned
// by backward liveness to the comparators that feed the median wires. Wires
// [H, wires) are +inf pads; pads sort above every real value, so order
// statistics below H are untouched.
struct selection_network {
    int heads = 0;
    int wires = 0;
    int lo = 0;   // wire holding order statistic (H-1)/2 after replay
    int hi = 0;   // wire holding order statistic H/2 (== lo for odd H)
    std::vector<std::pair<int, int>> comparators;

    static selection_network build(int heads) {
        selection_network net;
        net.heads = heads;
        net.wires = static_cast<int>(std::bit_ceil(static_cast<unsigned>(heads)));
        net.lo = (heads - 1) / 2;
        net.hi = heads / 2;
        if (net.wires > 1) {
            std::vector<std::pair<int, int>> all;
            sort_range(all, 0, net.wires);
            net.comparators = prune(all, net.wires, net.lo, net.hi);
        }
        return net;
    }

private:
    static void merge_range(std::vector<std::pair<int, int>>& cs, int lo, int n, int r) {
        const int step = r * 2;
        if (step < n) {
            merge_range(cs, lo, n, step);
            merge_range(cs, lo + r, n, step);
            for (int i = lo + r; i + r < lo + n; i += step) cs.emplace_back(i, i + r);
        } else {
            cs.emplace_back(lo, lo + r);
        }
    }

    static void sort_range(std::vector<std::pair<int, int>>& cs, int lo, int n) {
        if (n > 1) {
            const int half = n / 2;
            sort_range(cs, lo, half);
            sort_range(cs, lo + half, half);
            merge_range(cs, lo, n, 1);
        }
    }

    // Keep only comparators whose outputs can reach the median wires.
    static std::vector<std::pair<int, int>> prune(const std::vector<std::pair<int, int>>& cs,
                                                  int wires, int lo, int hi) {
        std::vector<char> live(wires, 0);
        live[lo] = live[hi] = 1;
        std::vector<std::pair<int, int>> kept;
        for (auto it = cs.rbegin(); it != cs.rend(); ++it) {
            auto [a, b] = *it;
            if (live[a] || live[b]) {
                kept.push_back(*it);
                live[a] = live[b] = 1;
            }
        }
        std::reverse(kept.begin(), kept.end());
        return kept;
    }
};

}  // namespace sadi::detail
