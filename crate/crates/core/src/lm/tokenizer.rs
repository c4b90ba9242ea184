//! Byte-level tokenizer with two special tokens.

pub const BOS: usize = 256;
pub const EOS: usize = 257;
pub const VOCAB_SIZE: usize = 258;

pub fn encode(text: &str) -> Vec<usize> {
    text.bytes().map(usize::from).collect()
}

/// Decodes byte tokens, skipping specials; invalid UTF-8 is replaced.
pub fn decode(tokens: &[usize]) -> String {
    let bytes: Vec<u8> = tokens.iter().filter(|&&t| t < 256).map(|&t| t as u8).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

/// A supervised sequence: `inputs[i]` predicts `targets[i]`, scored where `mask[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub inputs: Vec<usize>,
    pub targets: Vec<usize>,
    pub mask: Vec<bool>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn supervised(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Positions whose targets belong to the completion.
    pub fn completion_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.mask[i]).collect()
    }
}

/// Lays out `BOS prompt completion EOS` within `max_seq` input positions.
///
/// The completion (with EOS) keeps its start and is capped at three quarters
/// of the window; the prompt keeps its tail.
pub fn encode_pair(prompt: &str, completion: &str, max_seq: usize) -> Sequence {
    assert!(max_seq >= 4, "window too small");
    let mut comp = encode(completion);
    comp.push(EOS);
    comp.truncate((max_seq * 3 / 4).max(1));
    let mut head = vec![BOS];
    head.extend(encode(prompt));
    let room = max_seq + 1 - comp.len();
    if head.len() > room {
        head.drain(..head.len() - room);
    }
    let prompt_len = head.len();
    let mut full = head;
    full.extend(comp);
    let n = full.len() - 1;
    Sequence {
        inputs: full[..n].to_vec(),
        targets: full[1..].to_vec(),
        mask: (0..n).map(|i| i + 1 >= prompt_len).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn short_pair_layout() {
        let s = encode_pair("ab", "c", 16);
        assert_eq!(s.inputs, vec![BOS, 97, 98, 99]);
        assert_eq!(s.targets, vec![97, 98, 99, EOS]);
        assert_eq!(s.mask, vec![false, false, true, true]);
    }

    #[test]
    fn decode_skips_specials() {
        assert_eq!(decode(&[BOS, 104, 105, EOS]), "hi");
    }

    proptest! {
        #[test]
        fn pairs_fit_the_window(p in ".{0,200}", c in ".{0,200}", max_seq in 4usize..128) {
            let s = encode_pair(&p, &c, max_seq);
            prop_assert!(s.len() <= max_seq);
            prop_assert!(s.supervised() >= 1);
            prop_assert_eq!(&s.inputs[1..], &s.targets[..s.len() - 1]);
            prop_assert!(s.inputs.iter().chain(&s.targets).all(|&t| t < VOCAB_SIZE));
        }
    }
}
