//! Emotion vocabularies and reference values for the Empathetic Dialogue label set.

/// The 32 situation labels, lexicographic.
pub const EMPATHETIC_EMOTIONS: [&str; 32] = [
    "afraid",
    "angry",
    "annoyed",
    "anticipating",
    "anxious",
    "apprehensive",
    "ashamed",
    "caring",
    "confident",
    "content",
    "devastated",
    "disappointed",
    "disgusted",
    "embarrassed",
    "excited",
    "faithful",
    "furious",
    "grateful",
    "guilty",
    "hopeful",
    "impressed",
    "jealous",
    "joyful",
    "lonely",
    "nostalgic",
    "prepared",
    "proud",
    "sad",
    "sentimental",
    "surprised",
    "terrified",
    "trusting",
];

/// Dataset labels standing in for Plutchik's eight primaries.
pub const DEFAULT_BASICS: [&str; 8] = [
    "angry",
    "anticipating",
    "afraid",
    "sad",
    "disgusted",
    "trusting",
    "joyful",
    "surprised",
];

/// Clockwise placement of the basics on the wheel, following Plutchik's
/// joy, trust, fear, surprise, sadness, disgust, anger, anticipation.
pub const WHEEL_ORDER: [&str; 8] = [
    "joyful",
    "trusting",
    "afraid",
    "surprised",
    "sad",
    "disgusted",
    "angry",
    "anticipating",
];

/// Russell & Mehrabian's pleasure/arousal/dominance values for the 22
/// labels they cover, as `(emotion, [p, a, d])` with the published digits.
pub const RUSSELL_PAD: [(&str, [&str; 3]); 22] = [
    ("afraid", ["-0.64", "0.6", "-0.43"]),
    ("angry", ["-0.51", "0.59", "0.25"]),
    ("annoyed", ["-0.28", "0.17", "0.04"]),
    ("anxious", ["0.01", "0.59", "-0.15"]),
    ("ashamed", ["-0.57", "0.01", "-0.34"]),
    ("caring", ["0.64", "0.35", "0.24"]),
    ("content", ["0.86", "0.2", "0.62"]),
    ("devastated", ["0.14", "0.45", "-0.24"]),
    ("disgusted", ["-0.6", "0.35", "0.11"]),
    ("embarrassed", ["-0.46", "0.54", "-0.24"]),
    ("excited", ["0.62", "0.75", "0.38"]),
    ("furious", ["-0.44", "0.72", "0.32"]),
    ("grateful", ["0.64", "0.16", "-0.21"]),
    ("guilty", ["-0.57", "0.28", "-0.34"]),
    ("hopeful", ["0.51", "0.23", "0.14"]),
    ("impressed", ["0.41", "0.3", "-0.32"]),
    ("joyful", ["0.76", "0.48", "0.35"]),
    ("lonely", ["-0.66", "-0.43", "-0.32"]),
    ("proud", ["0.77", "0.38", "0.65"]),
    ("sad", ["-0.64", "-0.27", "-0.33"]),
    ("surprised", ["0.4", "0.67", "-0.13"]),
    ("terrified", ["-0.62", "0.82", "-0.43"]),
];

/// `RUSSELL_PAD` rendered in the known-PAD TSV schema.
pub fn russell_pad_tsv() -> String {
    let mut out = String::from("emotion\tpleasure\tarousal\tdominance\n");
    for (name, [p, a, d]) in RUSSELL_PAD {
        out.push_str(&format!("{name}\t{p}\t{a}\t{d}\n"));
    }
    out
}
