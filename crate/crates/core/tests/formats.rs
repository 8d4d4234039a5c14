use ditok_core::corpus::{
    decode_codebook, decode_embeddings, decode_tokens, encode_codebook, encode_embeddings, encode_tokens,
    read_embedding_file, write_embedding_file, EmbeddingSequence, TokenSequence,
};
use ditok_core::transducer::{decode_checkpoint, encode_checkpoint, NamedParam};
use ditok_core::tokenizer::Codebook;
use proptest::prelude::*;

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn embedding() -> impl Strategy<Value = EmbeddingSequence> {
    (1usize..20, 1usize..12, prop::sample::select(vec![50.0f32, 100.0, 49.5]), "[a-z0-9]{0,12}").prop_flat_map(
        |(t, d, rate, tag)| {
            prop::collection::vec(-1e6f32..1e6, t * d)
                .prop_map(move |v| EmbeddingSequence::new(v, t, d, rate, tag.clone()).unwrap())
        },
    )
}

fn tokens() -> impl Strategy<Value = TokenSequence> {
    (1usize..4, 1usize..40, 1u32..5000).prop_flat_map(|(g, t, k)| {
        prop::collection::vec(prop::collection::vec(0..k, t), g)
            .prop_map(move |groups| TokenSequence::new(groups, vec![k; g], 50.0).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn dsem_round_trip(seq in embedding()) {
        let back = decode_embeddings(&encode_embeddings(&seq).unwrap()).unwrap();
        prop_assert_eq!(bits(back.frames()), bits(seq.frames()));
        prop_assert_eq!((back.num_frames(), back.dim()), (seq.num_frames(), seq.dim()));
        prop_assert_eq!(back.frame_rate_hz.to_bits(), seq.frame_rate_hz.to_bits());
        prop_assert_eq!(back.source_tag, seq.source_tag);
    }

    #[test]
    fn dstk_round_trip(seq in tokens()) {
        prop_assert_eq!(decode_tokens(&encode_tokens(&seq).unwrap()).unwrap(), seq);
    }

    #[test]
    fn dscb_round_trip((k, d, vals) in (1usize..30, 1usize..10).prop_flat_map(|(k, d)| (Just(k), Just(d), prop::collection::vec(-1e4f32..1e4, k * d))), shared in any::<bool>()) {
        let scope = if shared { "shared".to_string() } else { "syn".to_string() };
        let cb = Codebook::new(vals, k, d, scope).unwrap();
        let back = decode_codebook(&encode_codebook(&cb).unwrap()).unwrap();
        prop_assert!(back.same_model(&cb));
    }

    #[test]
    fn checkpoint_round_trip(params in prop::collection::vec(("[a-z.]{1,16}", 1usize..6, 1usize..6, any::<u32>()), 0..8)) {
        let params: Vec<NamedParam> = params
            .into_iter()
            .map(|(name, r, c, seed)| NamedParam {
                name,
                shape: vec![r, c],
                data: (0..r * c).map(|i| f32::from_bits(seed.wrapping_mul(i as u32 + 1))).collect(),
            })
            .collect();
        let back = decode_checkpoint(&encode_checkpoint(&params).unwrap()).unwrap();
        prop_assert_eq!(back.len(), params.len());
        for (a, b) in back.iter().zip(&params) {
            prop_assert_eq!(&a.name, &b.name);
            prop_assert_eq!(&a.shape, &b.shape);
            prop_assert_eq!(bits(&a.data), bits(&b.data));
        }
    }

    #[test]
    fn truncation_is_rejected(seq in embedding(), cut in 1usize..16) {
        let bytes = encode_embeddings(&seq).unwrap();
        let n = bytes.len().saturating_sub(cut);
        prop_assert!(decode_embeddings(&bytes[..n]).is_err());
    }
}

#[test]
fn bad_magic_and_trailing_bytes() {
    let seq = EmbeddingSequence::new(vec![1.0, 2.0], 1, 2, 50.0, "x").unwrap();
    let mut bytes = encode_embeddings(&seq).unwrap();
    bytes.push(0);
    assert!(decode_embeddings(&bytes).is_err());
    bytes.pop();
    bytes[0] = b'X';
    assert!(decode_embeddings(&bytes).is_err());
    assert!(decode_tokens(&encode_embeddings(&seq).unwrap()).is_err());
}

#[test]
fn file_round_trip_creates_parents() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a/b/c.dsem");
    let seq = EmbeddingSequence::new(vec![0.5; 6], 3, 2, 50.0, "x").unwrap();
    write_embedding_file(&seq, &path).unwrap();
    assert_eq!(read_embedding_file(&path).unwrap(), seq);
    let err = read_embedding_file(dir.path().join("missing.dsem")).unwrap_err();
    assert!(err.to_string().contains("missing.dsem"));
}
