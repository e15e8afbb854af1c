#include "votecal/labels.hpp"

#include "votecal/common.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace votecal {

int ClassDistribution::argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
        if (probs[i] > probs[best]) best = i;
    }
    return static_cast<int>(best) + 1;
}

double ClassDistribution::max() const {
    double best = probs.empty() ? 0.0 : probs[0];
    for (double p : probs) best = std::max(best, p);
    return best;
}

bool ClassDistribution::is_valid(double tol) const {
    return !probs.empty() && on_simplex(probs, tol);
}

ClassDistribution ClassDistribution::one_hot(int class_index, int class_count) {
    if (class_index < 1 || class_index > class_count) {
        throw Error::input("one_hot: class index " + std::to_string(class_index) +
                           " outside 1.." + std::to_string(class_count));
    }
    ClassDistribution d;
    d.probs.assign(static_cast<std::size_t>(class_count), 0.0);
    d.probs[static_cast<std::size_t>(class_index - 1)] = 1.0;
    return d;
}

long long VoteCounts::total() const {
    long long sum = 0;
    for (int c : counts) sum += c;
    return sum;
}

VoteCounts tally_votes(const VoteRecord& record, int class_count) {
    if (class_count < 1) throw Error::input("tally_votes: class count must be positive");
    VoteCounts tally;
    tally.counts.assign(static_cast<std::size_t>(class_count), 0);
    for (int vote : record.votes) {
        if (vote < 1 || vote > class_count) {
            throw Error::input("tally_votes: vote " + std::to_string(vote) + " for sample '" +
                               record.sample_id + "' outside 1.." + std::to_string(class_count));
        }
        ++tally.counts[static_cast<std::size_t>(vote - 1)];
    }
    return tally;
}

MajorityResult majority_label(const VoteCounts& counts) {
    if (counts.total() < 1) throw Error::input("majority_label: vote counts are all zero");
    std::size_t best = 0;
    for (std::size_t k = 1; k < counts.counts.size(); ++k) {
        if (counts.counts[k] > counts.counts[best]) best = k;
    }
    MajorityResult result;
    result.winner = static_cast<int>(best) + 1;
    result.tied = std::count(counts.counts.begin(), counts.counts.end(), counts.counts[best]) > 1;
    result.label = ClassDistribution::one_hot(result.winner, static_cast<int>(counts.counts.size()));
    return result;
}

ClassDistribution distributional_label(const VoteCounts& counts) {
    long long total = counts.total();
    if (total < 1) throw Error::input("distributional_label: vote counts are all zero");
    ClassDistribution d;
    d.probs.reserve(counts.counts.size());
    for (int c : counts.counts) {
        d.probs.push_back(static_cast<double>(c) / static_cast<double>(total));
    }
    return d;
}

ClassDistribution smooth_label(const ClassDistribution& label, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw Error::input("smooth_label: alpha " + format_double(alpha) + " outside [0,1]");
    }
    const double k = static_cast<double>(label.size());
    ClassDistribution smoothed;
    smoothed.probs.reserve(label.size());
    for (double p : label.probs) {
        smoothed.probs.push_back(alpha / k + (1.0 - alpha) * p);
    }
    return smoothed;
}

double vote_entropy(const ClassDistribution& label) {
    double entropy = 0.0;
    for (double p : label.probs) {
        if (p > 0.0) entropy -= p * std::log(p);
    }
    return entropy;
}

std::vector<std::vector<long long>> voter_confusion(std::span<const VoteRecord> records,
                                                    int class_count) {
    if (records.empty()) throw Error::input("voter_confusion: empty record set");
    std::vector<std::vector<long long>> matrix(
        static_cast<std::size_t>(class_count),
        std::vector<long long>(static_cast<std::size_t>(class_count), 0));
    for (const VoteRecord& record : records) {
        VoteCounts counts = tally_votes(record, class_count);
        int winner = majority_label(counts).winner;
        auto& row = matrix[static_cast<std::size_t>(winner - 1)];
        for (std::size_t k = 0; k < counts.counts.size(); ++k) {
            row[k] += counts.counts[k];
        }
    }
    return matrix;
}

SubsetFilterResult filter_class_subset(std::span<const VoteRecord> records,
                                       std::vector<int> class_subset, int class_count) {
    std::sort(class_subset.begin(), class_subset.end());
    class_subset.erase(std::unique(class_subset.begin(), class_subset.end()), class_subset.end());
    if (class_subset.empty()) throw Error::input("filter_class_subset: empty class subset");
    for (int c : class_subset) {
        if (c < 1 || c > class_count) {
            throw Error::input("filter_class_subset: class " + std::to_string(c) +
                               " outside 1.." + std::to_string(class_count));
        }
    }

    // old class index -> new 1-based index, 0 for dropped classes
    std::vector<int> remap(static_cast<std::size_t>(class_count) + 1, 0);
    for (std::size_t i = 0; i < class_subset.size(); ++i) {
        remap[static_cast<std::size_t>(class_subset[i])] = static_cast<int>(i) + 1;
    }

    SubsetFilterResult result;
    result.kept_classes = class_subset;
    for (const VoteRecord& record : records) {
        int winner = majority_label(tally_votes(record, class_count)).winner;
        if (remap[static_cast<std::size_t>(winner)] == 0) {
            result.dropped.push_back(record.sample_id);
            continue;
        }
        VoteRecord kept;
        kept.sample_id = record.sample_id;
        kept.group_id = record.group_id;
        for (int vote : record.votes) {
            if (int mapped = remap[static_cast<std::size_t>(vote)]; mapped != 0) {
                kept.votes.push_back(mapped);
            }
        }
        result.records.push_back(std::move(kept));
    }
    return result;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

int parse_int_field(const std::string& field, int line_number, const char* what) {
    try {
        std::size_t consumed = 0;
        int value = std::stoi(field, &consumed);
        if (consumed != field.size()) throw std::invalid_argument(field);
        return value;
    } catch (const std::exception&) {
        throw Error::input("line " + std::to_string(line_number) + ": cannot parse " +
                           std::string(what) + " '" + field + "'");
    }
}

} // namespace

std::vector<VoteRecord> read_votes_csv(const std::filesystem::path& path, int class_count) {
    std::ifstream in(path);
    if (!in) throw Error::input("cannot open vote file '" + path.string() + "'");

    std::string line;
    if (!std::getline(in, line)) throw Error::input("vote file '" + path.string() + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    auto header = split_csv(line);
    if (header.size() < 3 || header[0] != "sample_id" || header[1] != "group_id") {
        throw Error::input("line 1: expected header sample_id,group_id,v1,... or "
                           "sample_id,group_id,c1,...");
    }
    bool count_form;
    if (header[2] == "v1") {
        count_form = false;
    } else if (header[2] == "c1") {
        count_form = true;
        if (header.size() - 2 != static_cast<std::size_t>(class_count)) {
            throw Error::input("line 1: count-form header has " +
                               std::to_string(header.size() - 2) + " classes, expected " +
                               std::to_string(class_count));
        }
    } else {
        throw Error::input("line 1: third column must be 'v1' or 'c1', got '" + header[2] + "'");
    }
    const std::size_t value_columns = header.size() - 2;

    std::vector<VoteRecord> records;
    std::size_t votes_per_record = 0;
    int line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv(line);
        if (fields.size() != header.size()) {
            throw Error::input("line " + std::to_string(line_number) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(fields.size()));
        }
        VoteRecord record;
        record.sample_id = fields[0];
        record.group_id = fields[1];
        if (count_form) {
            for (std::size_t k = 0; k < value_columns; ++k) {
                int count = parse_int_field(fields[k + 2], line_number, "count");
                if (count < 0) {
                    throw Error::input("line " + std::to_string(line_number) +
                                       ": negative count " + fields[k + 2]);
                }
                record.votes.insert(record.votes.end(), static_cast<std::size_t>(count),
                                    static_cast<int>(k) + 1);
            }
        } else {
            for (std::size_t j = 0; j < value_columns; ++j) {
                int vote = parse_int_field(fields[j + 2], line_number, "vote");
                if (vote < 1 || vote > class_count) {
                    throw Error::input("line " + std::to_string(line_number) + ": vote " +
                                       std::to_string(vote) + " outside 1.." +
                                       std::to_string(class_count));
                }
                record.votes.push_back(vote);
            }
        }
        if (record.votes.empty()) {
            throw Error::input("line " + std::to_string(line_number) + ": sample '" +
                               record.sample_id + "' has no votes");
        }
        if (votes_per_record == 0) {
            votes_per_record = record.votes.size();
        } else if (record.votes.size() != votes_per_record) {
            throw Error::input("line " + std::to_string(line_number) + ": sample '" +
                               record.sample_id + "' has " + std::to_string(record.votes.size()) +
                               " votes, expected " + std::to_string(votes_per_record));
        }
        records.push_back(std::move(record));
    }
    if (records.empty()) throw Error::input("vote file '" + path.string() + "' has no data rows");
    return records;
}

std::string votes_csv(std::span<const VoteRecord> records) {
    std::string out = "sample_id,group_id";
    const std::size_t votes = records.empty() ? 0 : records[0].votes.size();
    for (std::size_t j = 1; j <= votes; ++j) out += ",v" + std::to_string(j);
    out += "\n";
    for (const VoteRecord& record : records) {
        out += record.sample_id + "," + record.group_id;
        for (int vote : record.votes) out += "," + std::to_string(vote);
        out += "\n";
    }
    return out;
}

} // namespace votecal
