#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace votecal {

// Class indices are 1-based throughout the public API, matching the vote file
// format; probability and count vectors are positional (entry k-1 belongs to
// class k).

/// Probability vector over the K classes. Holds distributional labels,
/// one-hot labels and predictions alike.
struct ClassDistribution {
    std::vector<double> probs;

    std::size_t size() const { return probs.size(); }
    double operator[](std::size_t i) const { return probs[i]; }

    /// 1-based class index of the largest entry, lowest index on ties.
    int argmax() const;
    double max() const;

    /// All entries in [0,1], sum within `tol` of 1.
    bool is_valid(double tol = 1e-9) const;

    static ClassDistribution one_hot(int class_index, int class_count);
};

/// One labelled sample's raw annotator votes.
struct VoteRecord {
    std::string sample_id;
    std::string group_id;
    std::vector<int> votes; // values in 1..K
};

/// Per-class tallies of one sample's votes; entries sum to the vote count M.
struct VoteCounts {
    std::vector<int> counts;

    long long total() const;
};

struct MajorityResult {
    ClassDistribution label; // one-hot at `winner`
    int winner = 0;          // 1-based class index
    bool tied = false;       // >= 2 classes attained the maximum count
};

/// Count votes per class. Throws an input error naming the sample if a vote
/// lies outside 1..class_count.
VoteCounts tally_votes(const VoteRecord& record, int class_count);

/// Majority vote with deterministic lowest-index tie-breaking.
MajorityResult majority_label(const VoteCounts& counts);

/// Empirical vote distribution: counts / M.
ClassDistribution distributional_label(const VoteCounts& counts);

/// Convex mix with the uniform distribution: alpha/K + (1-alpha) * label.
ClassDistribution smooth_label(const ClassDistribution& label, double alpha);

/// Shannon entropy in nats; zero-probability terms contribute zero.
double vote_entropy(const ClassDistribution& label);

/// K x K count matrix: entry (r-1, c-1) is the number of individual votes for
/// class c among samples whose majority winner is class r.
std::vector<std::vector<long long>> voter_confusion(std::span<const VoteRecord> records,
                                                    int class_count);

/// Restriction of a vote set to a class subset. Votes outside the subset are
/// dropped (per-sample vote totals shrink accordingly); samples whose
/// majority falls outside the subset are dropped entirely. Kept classes are
/// re-indexed to 1..subset.size() in ascending original order.
struct SubsetFilterResult {
    std::vector<VoteRecord> records;   // votes re-indexed to the subset
    std::vector<int> kept_classes;     // original index of each new class
    std::vector<std::string> dropped;  // sample_ids removed entirely
};

SubsetFilterResult filter_class_subset(std::span<const VoteRecord> records,
                                       std::vector<int> class_subset, int class_count);

// Vote file format (CSV, UTF-8, header required):
//   sample_id,group_id,v1,...,vJ   individual votes, class indices in 1..K
//   sample_id,group_id,c1,...,cK   per-class counts
// The two forms are auto-detected from the header. Count-form rows are
// expanded to vote lists in ascending class order. Parse errors report the
// 1-based line number.
std::vector<VoteRecord> read_votes_csv(const std::filesystem::path& path, int class_count);
std::string votes_csv(std::span<const VoteRecord> records);

} // namespace votecal
