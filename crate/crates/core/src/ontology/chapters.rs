/// One ICD-10-CM chapter, covering an inclusive range of 3-character categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chapter {
    pub roman: &'static str,
    pub first: &'static str,
    pub last: &'static str,
    pub title: &'static str,
}

pub const CHAPTERS: [Chapter; 22] = [
    ch("I", "A00", "B99", "Certain infectious and parasitic diseases"),
    ch("II", "C00", "D49", "Neoplasms"),
    ch(
        "III",
        "D50",
        "D89",
        "Diseases of the blood and blood-forming organs and certain disorders involving the immune mechanism",
    ),
    ch("IV", "E00", "E89", "Endocrine, nutritional and metabolic diseases"),
    ch("V", "F01", "F99", "Mental, behavioral and neurodevelopmental disorders"),
    ch("VI", "G00", "G99", "Diseases of the nervous system"),
    ch("VII", "H00", "H59", "Diseases of the eye and adnexa"),
    ch("VIII", "H60", "H95", "Diseases of the ear and mastoid process"),
    ch("IX", "I00", "I99", "Diseases of the circulatory system"),
    ch("X", "J00", "J99", "Diseases of the respiratory system"),
    ch("XI", "K00", "K95", "Diseases of the digestive system"),
    ch("XII", "L00", "L99", "Diseases of the skin and subcutaneous tissue"),
    ch("XIII", "M00", "M99", "Diseases of the musculoskeletal system and connective tissue"),
    ch("XIV", "N00", "N99", "Diseases of the genitourinary system"),
    ch("XV", "O00", "O9A", "Pregnancy, childbirth and the puerperium"),
    ch("XVI", "P00", "P96", "Certain conditions originating in the perinatal period"),
    ch(
        "XVII",
        "Q00",
        "Q99",
        "Congenital malformations, deformations and chromosomal abnormalities",
    ),
    ch(
        "XVIII",
        "R00",
        "R99",
        "Symptoms, signs and abnormal clinical and laboratory findings, not elsewhere classified",
    ),
    ch(
        "XIX",
        "S00",
        "T88",
        "Injury, poisoning and certain other consequences of external causes",
    ),
    ch("XX", "V00", "Y99", "External causes of morbidity"),
    ch("XXI", "Z00", "Z99", "Factors influencing health status and contact with health services"),
    ch("XXII", "U00", "U85", "Codes for special purposes"),
];

const fn ch(roman: &'static str, first: &'static str, last: &'static str, title: &'static str) -> Chapter {
    Chapter {
        roman,
        first,
        last,
        title,
    }
}

/// Categories compare as ASCII strings, so "O9A" sorts after "O99".
pub fn chapter_for_category(category: &str) -> Option<&'static Chapter> {
    CHAPTERS
        .iter()
        .find(|c| c.first <= category && category <= c.last)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_are_disjoint() {
        for (i, a) in CHAPTERS.iter().enumerate() {
            assert!(a.first <= a.last);
            for b in &CHAPTERS[i + 1..] {
                assert!(a.last < b.first || b.last < a.first, "{} overlaps {}", a.roman, b.roman);
            }
        }
    }

    #[test]
    fn boundaries() {
        assert_eq!(chapter_for_category("A00").unwrap().roman, "I");
        assert_eq!(chapter_for_category("B99").unwrap().roman, "I");
        assert_eq!(chapter_for_category("D3A").unwrap().roman, "II");
        assert_eq!(chapter_for_category("O9A").unwrap().roman, "XV");
        assert_eq!(chapter_for_category("T88").unwrap().roman, "XIX");
        assert_eq!(chapter_for_category("U07").unwrap().roman, "XXII");
        assert!(chapter_for_category("K96").is_none());
    }
}
