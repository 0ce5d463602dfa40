#include "vln/dataset.hpp"

#include "vln/error.hpp"
#include "vln/world.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

namespace vln {

std::string validate_item(const Scene& scene, const PathItem& item) {
    const NavGraph& graph = scene.graph();
    if (item.scan != scene.id()) return "scan '" + item.scan + "' does not match scene '" + scene.id() + "'";
    if (item.path.size() < kMinPathEdges + 1 || item.path.size() > kMaxPathEdges + 1) {
        return "path has " + std::to_string(item.path.size() - 1) + " edges";
    }
    std::vector<VertexId> vs;
    for (const auto& id : item.path) {
        auto v = graph.find(id);
        if (!v) return "unknown viewpoint '" + id + "'";
        vs.push_back(*v);
    }
    double length = 0.0;
    for (std::size_t i = 1; i < vs.size(); ++i) {
        if (!graph.adjacent(vs[i - 1], vs[i])) return "path is not connected at step " + std::to_string(i);
        length += graph.weight(vs[i - 1], vs[i]);
    }
    if (std::abs(length - item.distance) > 1e-6) return "distance does not match path length";
    if (item.distance < kMinPathDistance) return "distance below 5 m";
    const auto to_goal = scene.distances_to(vs.back());
    if (std::abs((*to_goal)[index_of(vs.front())] - length) > length_tolerance(length)) return "path is not a shortest path";
    if (item.instructions.size() != kInstructionsPerPath) return "item needs exactly 3 instructions";
    return {};
}

TeacherRollout teacher_rollout(const Simulator& sim, const Pose& start, VertexId goal, int max_steps) {
    TeacherRollout out;
    SimConfig cfg = sim.config();
    cfg.step_limit = std::max(cfg.step_limit, max_steps + 1);
    const Simulator unlimited(sim.scene(), cfg);
    EpisodeState state = unlimited.new_episode(start);
    for (int i = 0; i < max_steps && !state.done; ++i) {
        // the shared simulator carries the plan cache
        const ModelAction a = sim.teacher_action(state, goal);
        out.viewpoints.push_back(state.pose.viewpoint());
        out.actions.push_back(a);
        state = unlimited.model_step(state, a);
    }
    return out;
}

SampleResult sample_paths(const Simulator& sim, std::size_t count, Rng& rng, const SampleOptions& opts) {
    const Scene& scene = sim.scene();
    const NavGraph& graph = scene.graph();
    SampleResult result;
    const std::size_t n = graph.size();
    if (n < 2 || count == 0) {
        result.shortfall = count;
        return result;
    }
    const std::size_t budget = opts.budget > 0 ? opts.budget : 400 * count;
    std::set<std::pair<std::size_t, std::size_t>> used;
    int next_id = opts.first_path_id;
    for (std::size_t draw = 0; draw < budget && result.items.size() < count; ++draw) {
        const std::size_t s = rng.index(n);
        const std::size_t g = rng.index(n);
        const bool insist_cross = rng.bernoulli(opts.cross_room_prob);
        if (s == g || used.contains({s, g})) continue;
        const bool cross = &scene.layout().room_of(s) != &scene.layout().room_of(g);
        if (insist_cross && !cross) continue;
        const auto to_goal = scene.distances_to(vertex_at(g));
        auto route = shortest_path_with(graph, vertex_at(s), vertex_at(g), *to_goal);
        if (!route) continue;
        const std::size_t edges = route->vertices.size() - 1;
        if (route->length < kMinPathDistance || edges < kMinPathEdges || edges > kMaxPathEdges) continue;
        const double heading = rng.uniform(0.0, kTwoPi);
        if (opts.max_teacher_steps > 0) {
            const auto roll = teacher_rollout(sim, Pose(vertex_at(s), heading), vertex_at(g), opts.max_teacher_steps);
            if (roll.actions.empty() || roll.actions.back() != ModelAction::stop) continue;
        }
        used.insert({s, g});
        PathItem item;
        item.path_id = next_id++;
        item.scan = scene.id();
        item.heading = heading;
        item.distance = route->length;
        for (VertexId v : route->vertices) item.path.push_back(graph.id(v));
        result.items.push_back(std::move(item));
        if (cross) ++result.cross_room;
    }
    result.shortfall = count - result.items.size();
    return result;
}

// ---------------------------------------------------------------------------
// instruction grammar

namespace {

const std::vector<std::string>& objects_for(const std::string& label) {
    static const std::map<std::string, std::vector<std::string>> table = {
        {"kitchen", {"stove", "fridge", "counter", "sink", "island"}},
        {"bedroom", {"bed", "dresser", "nightstand", "wardrobe"}},
        {"bathroom", {"bathtub", "shower", "toilet", "mirror"}},
        {"living room", {"sofa", "couch", "fireplace", "television"}},
        {"dining room", {"dining table", "chairs", "chandelier", "buffet"}},
        {"hallway", {"rug", "painting", "coat rack"}},
        {"office", {"desk", "bookshelf", "computer", "filing cabinet"}},
        {"closet", {"shelves", "hangers", "shoe rack"}},
        {"laundry room", {"washer", "dryer", "ironing board"}},
        {"family room", {"armchair", "coffee table", "piano"}},
        {"lounge", {"bar", "armchairs", "pool table"}},
        {"garage", {"car", "workbench", "tool rack"}},
        {"library", {"bookcases", "reading chair", "globe"}},
        {"gym", {"treadmill", "weights", "exercise bike"}},
        {"porch", {"bench", "plants", "railing"}},
        {"entryway", {"front door", "doormat", "umbrella stand"}},
    };
    static const std::vector<std::string> fallback = {"doorway", "wall"};
    auto it = table.find(label);
    return it == table.end() ? fallback : it->second;
}

std::string count_word(std::size_t n) {
    static const char* words[] = {"zero", "one", "two", "three", "four", "five", "six", "seven", "eight"};
    return n < std::size(words) ? words[n] : std::to_string(n);
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& options) {
    return options[rng.index(options.size())];
}

struct Segment {
    enum Kind { turn, walk };
    Kind kind = turn;
    int turns = 0;                    // signed: positive = right
    std::size_t steps = 0;            // forward moves
    std::string from_room{}, to_room{};  // rooms at start/end of a walk
    std::vector<std::string> rooms_entered{};
};

std::vector<Segment> segment_rollout(const Simulator& sim, const TeacherRollout& roll) {
    std::vector<Segment> segs;
    const Scene& scene = sim.scene();
    for (std::size_t i = 0; i < roll.actions.size(); ++i) {
        const ModelAction a = roll.actions[i];
        if (a == ModelAction::left || a == ModelAction::right) {
            const int d = a == ModelAction::right ? 1 : -1;
            if (segs.empty() || segs.back().kind != Segment::turn) segs.push_back(Segment{.kind = Segment::turn});
            segs.back().turns += d;
        } else if (a == ModelAction::forward) {
            const std::string& from = scene.room_label(roll.viewpoints[i]);
            const std::string& to = scene.room_label(i + 1 < roll.viewpoints.size() ? roll.viewpoints[i + 1]
                                                                                      : roll.viewpoints[i]);
            if (segs.empty() || segs.back().kind != Segment::walk) {
                segs.push_back(Segment{.kind = Segment::walk});
                segs.back().from_room = from;
            }
            Segment& s = segs.back();
            ++s.steps;
            if (to != from) s.rooms_entered.push_back(to);
            s.to_room = to;
        }
    }
    // turns that cancel out leave an empty segment behind
    std::erase_if(segs, [](const Segment& s) { return s.kind == Segment::turn && s.turns == 0; });
    return segs;
}

std::string turn_phrase(Rng& rng, int turns) {
    const std::string dir = turns > 0 ? "right" : "left";
    const int n = std::abs(turns);
    if (n == 1) return pick(rng, std::vector<std::string>{"turn slightly " + dir, "bear " + dir, "veer " + dir});
    if (n <= 3) {
        return pick(rng, std::vector<std::string>{"turn " + dir, "make a " + dir, "take a " + dir + " turn",
                                                  "go " + dir});
    }
    if (n == 4) return pick(rng, std::vector<std::string>{"turn sharply " + dir, "make a sharp " + dir});
    return pick(rng, std::vector<std::string>{"turn around", "turn all the way around", "make a u-turn"});
}

std::string walk_verb(Rng& rng) {
    return pick(rng, std::vector<std::string>{"walk", "go", "head", "move", "continue"});
}

// style 0: step counts; style 1: landmarks; style 2: terse
std::string walk_phrase(Rng& rng, const Segment& s, bool first_walk, int style) {
    std::string out;
    const std::string verb = walk_verb(rng);
    if (!s.rooms_entered.empty()) {
        const std::string& dest = s.rooms_entered.back();
        if (first_walk && rng.bernoulli(0.6)) {
            out = pick(rng, std::vector<std::string>{"walk out of the ", "exit the ", "leave the "}) + s.from_room;
            out += pick(rng, std::vector<std::string>{" and go into the ", " and enter the ", " into the "}) + dest;
        } else {
            out = pick(rng, std::vector<std::string>{verb + " into the ", "enter the ", verb + " through the door to the "}) + dest;
        }
        if (s.rooms_entered.size() > 1) out = verb + " through the " + s.rooms_entered.front() + " into the " + dest;
        return out;
    }
    if (style == 0) {
        out = verb + pick(rng, std::vector<std::string>{" forward ", " straight ", " ahead "}) + count_word(s.steps) +
              (s.steps == 1 ? " step" : " steps");
    } else if (style == 1) {
        out = verb + pick(rng, std::vector<std::string>{" past the ", " toward the ", " along the "}) +
              pick(rng, objects_for(s.to_room));
    } else {
        out = verb + pick(rng, std::vector<std::string>{" forward", " straight", " ahead"});
        if (s.steps > 2) out += pick(rng, std::vector<std::string>{" a bit", " for a while", " some more"});
    }
    return out;
}

std::string final_phrase(Rng& rng, const std::string& goal_room, int style) {
    std::vector<std::string> options = {"stop in the " + goal_room, "wait in the " + goal_room,
                                        "stop at the " + goal_room, "stop there"};
    if (style == 1) options.push_back("stop next to the " + pick(rng, objects_for(goal_room)));
    return pick(rng, options);
}

std::string realize(Rng& rng, const std::vector<Segment>& segs, const std::string& start_room,
                    const std::string& goal_room, int style) {
    std::vector<std::string> clauses;
    bool first_walk = true;
    for (const Segment& s : segs) {
        if (s.kind == Segment::turn) {
            // small corrections are often left out, always in the terse style
            if (std::abs(s.turns) == 1 && (style == 2 || rng.bernoulli(0.5))) continue;
            clauses.push_back(turn_phrase(rng, s.turns));
        } else {
            clauses.push_back(walk_phrase(rng, s, first_walk, style));
            first_walk = false;
        }
    }
    if (segs.empty() && style != 2) clauses.push_back("you are already in the " + start_room);
    clauses.push_back(final_phrase(rng, goal_room, style));

    static const std::vector<std::string> joiners = {", then ", ". ", " and ", ", ", ", ", ". ", ". ", ". next, "};
    std::string text;
    for (std::size_t i = 0; i < clauses.size(); ++i) {
        if (i > 0) text += pick(rng, joiners);
        text += clauses[i];
    }
    text += ".";
    if (!text.empty()) text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
    for (std::size_t i = 2; i < text.size(); ++i) {
        if (text[i - 2] == '.' && text[i - 1] == ' ') text[i] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[i])));
    }
    return text;
}

}  // namespace

std::vector<std::string> gen_instructions(const Simulator& sim, const PathItem& item, std::uint64_t grammar_seed) {
    const Scene& scene = sim.scene();
    const NavGraph& graph = scene.graph();
    if (item.path.empty()) throw Error("gen_instructions: empty path");
    const VertexId start = graph.at(item.path.front());
    const VertexId goal = graph.at(item.path.back());
    const auto roll = teacher_rollout(sim, Pose(start, item.heading), goal);
    const auto segs = segment_rollout(sim, roll);
    const std::string& start_room = scene.room_label(start);
    const std::string& goal_room = scene.room_label(goal);

    Rng rng(hash_combine(grammar_seed, static_cast<std::uint64_t>(item.path_id) * 31 + hash_string(item.scan)));
    std::vector<std::string> out;
    for (int style = 0; style < 3; ++style) {
        std::string text;
        for (int attempt = 0; attempt < 16; ++attempt) {
            text = realize(rng, segs, start_room, goal_room, style);
            if (std::find(out.begin(), out.end(), text) == out.end()) break;
        }
        if (std::find(out.begin(), out.end(), text) != out.end()) {
            text.pop_back();
            text += style == 1 ? " when you get there." : " at the end.";
        }
        out.push_back(std::move(text));
    }
    return out;
}

// ---------------------------------------------------------------------------
// splits

const std::vector<PathItem>& Splits::items(std::string_view split) const {
    if (split == "train") return train;
    if (split == "val_seen") return val_seen;
    if (split == "val_unseen") return val_unseen;
    if (split == "test") return test;
    throw Error("unknown split '" + std::string(split) + "'");
}

Splits make_splits(std::vector<std::string> scenes, const std::vector<PathItem>& items, const SplitOptions& opts) {
    if (scenes.size() < 4) throw Error("make_splits: need at least 4 scenes, got " + std::to_string(scenes.size()));
    std::sort(scenes.begin(), scenes.end());
    scenes.erase(std::unique(scenes.begin(), scenes.end()), scenes.end());
    if (scenes.size() < 4) throw Error("make_splits: need at least 4 distinct scenes");
    const double n = static_cast<double>(scenes.size());
    auto count = [&](double fraction) {
        if (fraction <= 0.0) return std::size_t{0};
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(n * fraction)));
    };
    const std::size_t n_unseen = count(opts.unseen_fraction);
    const std::size_t n_test = count(opts.test_fraction);
    if (n_unseen + n_test + 1 > scenes.size()) throw Error("make_splits: fractions leave no training scenes");

    Rng rng(hash_combine(opts.seed, 0x5b1175ULL));
    rng.shuffle(scenes.begin(), scenes.end());
    Splits s;
    s.val_unseen_scenes.assign(scenes.begin(), scenes.begin() + static_cast<long>(n_unseen));
    s.test_scenes.assign(scenes.begin() + static_cast<long>(n_unseen), scenes.begin() + static_cast<long>(n_unseen + n_test));
    s.train_scenes.assign(scenes.begin() + static_cast<long>(n_unseen + n_test), scenes.end());
    for (auto* v : {&s.val_unseen_scenes, &s.test_scenes, &s.train_scenes}) std::sort(v->begin(), v->end());

    auto in = [](const std::vector<std::string>& v, const std::string& x) {
        return std::binary_search(v.begin(), v.end(), x);
    };
    std::vector<PathItem> pool;
    for (const PathItem& item : items) {
        if (in(s.val_unseen_scenes, item.scan)) {
            s.val_unseen.push_back(item);
        } else if (in(s.test_scenes, item.scan)) {
            s.test.push_back(item);
        } else if (in(s.train_scenes, item.scan)) {
            pool.push_back(item);
        } else {
            throw Error("make_splits: item " + std::to_string(item.path_id) + " refers to unlisted scene '" + item.scan + "'");
        }
    }
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    const auto n_seen = static_cast<std::size_t>(std::lround(static_cast<double>(pool.size()) * opts.val_seen_fraction));
    std::vector<bool> held(pool.size(), false);
    for (std::size_t i = 0; i < n_seen; ++i) held[order[i]] = true;
    for (std::size_t i = 0; i < pool.size(); ++i) (held[i] ? s.val_seen : s.train).push_back(pool[i]);
    return s;
}

// ---------------------------------------------------------------------------
// tokenisation

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) {
            std::string_view word = text.substr(i, j - i);
            std::size_t b = 0, e = word.size();
            while (b < e && std::ispunct(static_cast<unsigned char>(word[b]))) ++b;
            while (e > b && std::ispunct(static_cast<unsigned char>(word[e - 1]))) --e;
            if (e > b) {
                std::string tok(word.substr(b, e - b));
                for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
                out.push_back(std::move(tok));
            }
        }
        i = j;
    }
    return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
    tokens_ = {"<pad>", "<unk>", "<bos>", "<eos>"};
    for (const auto& t : tokens) {
        if (std::find(tokens_.begin(), tokens_.end(), t) != tokens_.end()) throw Error("duplicate vocabulary token '" + t + "'");
        tokens_.push_back(t);
    }
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
}

int Vocabulary::lookup(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end() || it->second < 4) return kUnk;
    return it->second;
}

std::vector<int> Vocabulary::encode(std::string_view text, std::size_t max_len) const {
    std::vector<int> ids;
    for (const auto& tok : tokenize(text)) {
        if (ids.size() >= max_len) break;
        ids.push_back(lookup(tok));
    }
    return ids;
}

Vocabulary build_vocab(const std::vector<std::string>& corpus, std::size_t min_count) {
    std::map<std::string, std::size_t> counts;
    for (const auto& text : corpus) {
        for (auto& tok : tokenize(text)) ++counts[tok];
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [tok, c] : counts) {
        if (c >= min_count) kept.emplace_back(tok, c);
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens;
    for (auto& [tok, _] : kept) tokens.push_back(tok);
    return Vocabulary(tokens);
}

// ---------------------------------------------------------------------------
// R2R json

std::vector<PathItem> load_r2r(const nlohmann::json& j) {
    if (!j.is_array()) throw ParseError("R2R file must be a JSON array");
    std::vector<PathItem> items;
    items.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& rec = j[i];
        const std::string at = " @ item " + std::to_string(i);
        auto field = [&](const char* name) -> const nlohmann::json& {
            if (!rec.is_object() || !rec.contains(name)) throw ParseError(std::string(name) + at);
            return rec[name];
        };
        PathItem item;
        try {
            const auto& distance = field("distance");
            const auto& scan = field("scan");
            const auto& path_id = field("path_id");
            const auto& path = field("path");
            const auto& heading = field("heading");
            const auto& instructions = field("instructions");
            if (!distance.is_number()) throw ParseError("distance" + at);
            if (!scan.is_string()) throw ParseError("scan" + at);
            if (!path_id.is_number_integer()) throw ParseError("path_id" + at);
            if (!path.is_array() || path.empty()) throw ParseError("path" + at);
            if (!heading.is_number()) throw ParseError("heading" + at);
            if (!instructions.is_array() || instructions.empty()) throw ParseError("instructions" + at);
            item.distance = distance.get<double>();
            item.scan = scan.get<std::string>();
            item.path_id = path_id.get<int>();
            item.path = path.get<std::vector<std::string>>();
            item.heading = heading.get<double>();
            item.instructions = instructions.get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("malformed record") + at + ": " + e.what());
        }
        items.push_back(std::move(item));
    }
    return items;
}

nlohmann::json save_r2r(const std::vector<PathItem>& items) {
    nlohmann::json j = nlohmann::json::array();
    for (const PathItem& item : items) {
        j.push_back({{"distance", item.distance},
                     {"scan", item.scan},
                     {"path_id", item.path_id},
                     {"path", item.path},
                     {"heading", item.heading},
                     {"instructions", item.instructions}});
    }
    return j;
}

std::vector<PathItem> load_r2r_file(const std::string& path) { return load_r2r(read_json_file(path)); }

void save_r2r_file(const std::string& path, const std::vector<PathItem>& items) { write_json_file(path, save_r2r(items)); }

}  // namespace vln
