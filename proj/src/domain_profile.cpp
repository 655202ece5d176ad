#include "streamforge/domain_profile.hpp"

#include <algorithm>
#include <cctype>

namespace streamforge::profile {

namespace {

const std::vector<std::string> kEmpty;

const std::vector<Topic> kAutomotiveTopics = {
    {"fuel economy",
     {"fuel", "mpg", "consumption", "economy", "mileage", "油耗", "省油"},
     "cost-conscious commuter who compares running costs",
     "low fuel consumption for daily commuting"},
    {"price",
     {"price", "budget", "cost", "discount", "cheap", "expensive", "afford", "价格", "多少钱", "优惠"},
     "budget-driven buyer negotiating for the best deal",
     "stay within the stated budget"},
    {"electric range",
     {"electric", "ev", "charging", "charge", "battery", "range", "hybrid", "续航", "充电"},
     "early adopter weighing electric ownership",
     "sufficient electric range and convenient charging"},
    {"space",
     {"seat", "seats", "space", "trunk", "family", "kids", "third row", "空间", "座"},
     "family-oriented buyer focused on practicality",
     "enough seating and cargo space for the family"},
    {"performance",
     {"horsepower", "power", "acceleration", "engine", "torque", "turbo", "动力", "加速"},
     "enthusiast who cares about driving dynamics",
     "responsive power and handling"},
    {"drivetrain",
     {"awd", "4wd", "all-wheel", "drivetrain", "snow", "四驱"},
     "cautious driver thinking about road conditions",
     "confident traction in poor weather"},
    {"safety",
     {"safety", "airbag", "crash", "assist", "adas", "安全"},
     "safety-first buyer",
     "strong safety ratings and driver assistance"},
};

const std::vector<Topic> kRestaurantTopics = {
    {"cuisine",
     {"cuisine", "dish", "dishes", "menu", "spicy", "vegetarian", "taste", "菜", "口味"},
     "curious diner exploring flavours",
     "a cuisine that suits the group's taste"},
    {"price",
     {"price", "budget", "cost", "per person", "cheap", "expensive", "价格", "人均"},
     "value-minded diner",
     "reasonable price per person"},
    {"location",
     {"where", "area", "near", "location", "parking", "metro", "地址", "附近"},
     "convenience-seeking diner",
     "an easy-to-reach location"},
    {"reservation",
     {"book", "reserve", "reservation", "table", "tonight", "tomorrow", "预订", "订位"},
     "planner who books ahead",
     "a confirmed table at the preferred time"},
    {"group",
     {"people", "party", "group", "private room", "birthday", "包间"},
     "host organizing a group meal",
     "seating for the whole party"},
};

const std::vector<Topic> kHotelTopics = {
    {"price",
     {"price", "budget", "rate", "cost", "cheap", "expensive", "per night", "价格", "房价"},
     "budget-aware traveller",
     "a nightly rate within budget"},
    {"location",
     {"where", "area", "near", "location", "airport", "station", "downtown", "地址", "附近"},
     "traveller who values a convenient base",
     "a location close to the traveller's plans"},
    {"room",
     {"room", "bed", "suite", "view", "twin", "king", "房型"},
     "comfort-focused guest",
     "the right room type"},
    {"amenities",
     {"breakfast", "pool", "gym", "wifi", "parking", "spa", "早餐"},
     "guest who expects good facilities",
     "amenities included with the stay"},
    {"booking",
     {"book", "reserve", "check-in", "check in", "check-out", "nights", "cancel", "预订", "入住"},
     "organised planner",
     "a confirmed booking for the travel dates"},
};

const std::vector<Topic> kNoTopics;

bool is_word_byte(char c) {
    const auto u = static_cast<unsigned char>(c);
    return u < 0x80 && (std::isalnum(u) != 0 || c == '_');
}

} // namespace

Ontology Ontology::defaults() {
    Ontology o;
    o.slots_["automotive"] = {"power_level", "manufacturer", "seat_count", "price_range", "fuel_consumption",
                              "vehicle_class", "energy_type", "body_type", "series", "drivetrain"};
    o.slots_["restaurant"] = {"cuisine", "area", "price_range", "party_size", "date", "time", "name"};
    o.slots_["hotel"] = {"area", "price_range", "star_rating", "room_type", "check_in_date", "nights", "name"};
    return o;
}

Ontology Ontology::from_json(const json& j) {
    Ontology o = defaults();
    if (!j.is_object()) {
        throw ConfigError("ontology must be an object of domain -> slot list");
    }
    for (const auto& [domain, slots] : j.items()) {
        o.set(domain, slots.get<std::vector<std::string>>());
    }
    return o;
}

const std::vector<std::string>& Ontology::slots(const Domain& d) const {
    const auto it = slots_.find(d.name());
    return it == slots_.end() ? kEmpty : it->second;
}

bool Ontology::allows(const Domain& d, std::string_view slot) const {
    const auto& s = slots(d);
    return std::find(s.begin(), s.end(), slot) != s.end();
}

bool Ontology::defined_for(const Domain& d) const { return slots_.contains(d.name()); }

std::vector<std::string> Ontology::domains() const {
    std::vector<std::string> out;
    for (const auto& [d, _] : slots_) {
        out.push_back(d);
    }
    return out;
}

void Ontology::set(const std::string& domain, std::vector<std::string> slots) {
    if (slots.empty()) {
        throw ConfigError("ontology for '" + domain + "' is empty");
    }
    slots_[domain] = std::move(slots);
}

json Ontology::to_json() const { return json(slots_); }

std::span<const Topic> topics(Domain::Kind kind) {
    switch (kind) {
    case Domain::Kind::automotive:
        return kAutomotiveTopics;
    case Domain::Kind::restaurant:
        return kRestaurantTopics;
    case Domain::Kind::hotel:
        return kHotelTopics;
    case Domain::Kind::other:
        break;
    }
    return kNoTopics;
}

std::size_t topic_hits(std::string_view text, const Topic& topic) {
    const std::string lower = to_lower_ascii(text);
    std::size_t hits = 0;
    for (const auto& kw : topic.keywords) {
        const bool ascii = std::all_of(kw.begin(), kw.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; });
        for (auto pos = lower.find(kw); pos != std::string::npos; pos = lower.find(kw, pos + 1)) {
            if (ascii) {
                const auto end = pos + kw.size();
                if ((pos > 0 && is_word_byte(lower[pos - 1])) || (end < lower.size() && is_word_byte(lower[end]))) {
                    continue;
                }
            }
            ++hits;
        }
    }
    return hits;
}

std::optional<Topic> dominant_topic(std::span<const std::string> texts, Domain::Kind kind) {
    std::optional<Topic> best;
    std::size_t best_hits = 0;
    for (const auto& topic : topics(kind)) {
        std::size_t hits = 0;
        for (const auto& t : texts) {
            hits += topic_hits(t, topic);
        }
        if (hits > best_hits) {
            best_hits = hits;
            best = topic;
        }
    }
    return best;
}

std::vector<std::string> progression_slots(const Domain& d, const Ontology& ontology) {
    std::vector<std::string> preferred;
    switch (d.kind()) {
    case Domain::Kind::automotive:
        preferred = {"price_range", "vehicle_class", "energy_type", "seat_count", "body_type", "power_level"};
        break;
    case Domain::Kind::restaurant:
        preferred = {"cuisine", "area", "price_range", "party_size", "date"};
        break;
    case Domain::Kind::hotel:
        preferred = {"area", "price_range", "star_rating", "room_type", "nights"};
        break;
    case Domain::Kind::other:
        break;
    }
    const auto& allowed = ontology.slots(d);
    std::vector<std::string> out;
    for (const auto& s : preferred) {
        if (ontology.allows(d, s)) {
            out.push_back(s);
        }
    }
    if (out.empty()) {
        const std::string terminal = terminal_slot(d);
        for (const auto& s : allowed) {
            if (s != terminal && out.size() < 6) {
                out.push_back(s);
            }
        }
    }
    return out;
}

std::string terminal_slot(const Domain& d) {
    switch (d.kind()) {
    case Domain::Kind::automotive:
        return "series";
    case Domain::Kind::restaurant:
        return "time";
    case Domain::Kind::hotel:
        return "check_in_date";
    case Domain::Kind::other:
        break;
    }
    return "confirmation";
}

std::string terminal_outcome(const Domain& d) {
    switch (d.kind()) {
    case Domain::Kind::automotive:
        return "test_drive_booked";
    case Domain::Kind::restaurant:
        return "reservation_made";
    case Domain::Kind::hotel:
        return "room_booked";
    case Domain::Kind::other:
        break;
    }
    return "request_completed";
}

std::string slot_words(std::string_view slot) {
    std::string out(slot);
    std::replace(out.begin(), out.end(), '_', ' ');
    return out;
}

} // namespace streamforge::profile
