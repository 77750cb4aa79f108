use petition_core::chain::{cascade_level, SignatureChain};
use petition_core::elgamal::{decrypt, encrypt, hybrid_decrypt, hybrid_encrypt};
use petition_core::group::{Group, Ristretto255, ScalarField, ToyGroup};
use petition_core::params::PetitionConfig;
use petition_core::setup::create_petition;
use petition_core::vss;
use proptest::prelude::*;
use proptest::sample::subsequence;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

type Scalar = <Ristretto255 as Group>::Scalar;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn elgamal_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let s = Scalar::random_nonzero(&mut rng);
        let m = Ristretto255::exp_g(&Scalar::random(&mut rng));
        let ct = encrypt::<Ristretto255, _>(&Ristretto255::exp_g(&s), &m, &mut rng).unwrap();
        prop_assert_eq!(decrypt::<Ristretto255>(&s, &ct), m);
    }

    #[test]
    fn hybrid_round_trip_and_wrong_key(seed in any::<u64>(), msg in proptest::collection::vec(any::<u8>(), 0..200)) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let s = Scalar::random_nonzero(&mut rng);
        let ct = hybrid_encrypt::<Ristretto255, _>(&Ristretto255::exp_g(&s), &msg, &mut rng).unwrap();
        prop_assert_eq!(hybrid_decrypt(&s, &ct).unwrap(), msg);
        prop_assert!(hybrid_decrypt(&(s + Scalar::one()), &ct).is_err());
    }

    #[test]
    fn any_t_shares_reconstruct(
        seed in any::<u64>(),
        (k, picked) in (1usize..8).prop_flat_map(|k| (Just(k), subsequence((1..=k as u32).collect::<Vec<_>>(), 1..=k))),
    ) {
        let t = picked.len();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let secret = Scalar::random(&mut rng);
        let (shares, comm) = vss::share::<Ristretto255, _>(&secret, t, k, &mut rng).unwrap();
        prop_assert!(shares.iter().all(|s| vss::verify_share(s, &comm)));
        let subset: Vec<_> = picked.iter().map(|&i| shares[i as usize - 1]).collect();
        prop_assert_eq!(vss::reconstruct::<Ristretto255>(&subset, t).unwrap(), secret);
        if t > 1 {
            prop_assert!(vss::reconstruct::<Ristretto255>(&subset[1..], t).is_err());
        }
        let points: Vec<_> = subset.iter().map(|s| (s.index, Ristretto255::exp_g(&s.value))).collect();
        prop_assert_eq!(vss::reconstruct_in_exponent::<Ristretto255>(&points, t).unwrap(), comm.secret_commitment());
    }

    #[test]
    fn cascade_level_is_the_largest_satisfied_m(th in proptest::collection::vec(1u32..12, 0..12)) {
        let m = cascade_level(th.iter().copied());
        let count = |m: u32| th.iter().filter(|&&x| x <= m).count() as u32;
        prop_assert!(m == 0 || count(m) >= m);
        prop_assert!((m + 1..=th.len() as u32 + 1).all(|bigger| count(bigger) < bigger));
    }

    #[test]
    fn fresh_chain_text_round_trips(seed in any::<u64>(), n in 1u32..5, k in 2u32..5) {
        let t = k.div_ceil(2);
        let config = PetitionConfig::new("Plant more trees", n, k, t, 1);
        let setup = create_petition::<ToyGroup, _>(&config, 4, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap();
        let chain = SignatureChain::new(setup.params, setup.transcript).unwrap();
        let text = chain.to_text();
        let loaded = SignatureChain::<ToyGroup>::from_text(&text).unwrap();
        prop_assert_eq!(loaded.to_text(), text);
        prop_assert_eq!(loaded.head_hash(), chain.head_hash());
    }
}
