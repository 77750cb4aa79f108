//! Petition creation: key ceremony, hash key and triple provisioning, header.

use rand::RngCore;

use crate::dist_hash::{self, BeaverTriple, HashKeyShare};
use crate::dkg::{self, CeremonyFaults, ContributionCommitment, RabbitShareStore};
use crate::elgamal::HYBRID_ALG_NAME;
use crate::error::Result;
use crate::group::Group;
use crate::params::{PetitionConfig, PetitionParams};

pub const PETITION_ID_LEN: usize = 16;

/// Output of a petition setup: the public header plus every rabbit's secrets.
#[derive(Clone, Debug)]
pub struct PetitionSetup<G: Group> {
    pub params: PetitionParams<G>,
    pub transcript: Vec<ContributionCommitment<G>>,
    pub stores: Vec<RabbitShareStore<G>>,
    pub hash_keys: Vec<HashKeyShare<G>>,
    pub triples: Vec<BeaverTriple<G>>,
}

/// Default number of Beaver triples dealt per petition. Every validation
/// spends one, including rejected repeat attempts, so small petitions get a floor.
pub fn default_triples(n: u32) -> usize {
    (4 * n as usize).max(32)
}

pub fn create_petition<G: Group, R: RngCore + ?Sized>(
    config: &PetitionConfig,
    triples: usize,
    rng: &mut R,
) -> Result<PetitionSetup<G>> {
    create_petition_with_faults(config, triples, rng, &CeremonyFaults::default())
}

pub fn create_petition_with_faults<G: Group, R: RngCore + ?Sized>(
    config: &PetitionConfig,
    triples: usize,
    rng: &mut R,
    faults: &CeremonyFaults,
) -> Result<PetitionSetup<G>> {
    config.validate::<G>()?;
    let (t, k) = (config.t as usize, config.k as usize);
    let mut petition_id = vec![0u8; PETITION_ID_LEN];
    rng.fill_bytes(&mut petition_id);

    let ceremony = dkg::run_ceremony::<G, R>(config.n, config.k, config.t, rng, faults)?;
    let (hash_keys, hash_generator) = dist_hash::hash_setup::<G, R>(t, k, &petition_id, rng)?;
    let triples = (0..triples as u64)
        .map(|id| dist_hash::triple_gen::<G, R>(id, t, k, rng))
        .collect::<Result<Vec<_>>>()?;

    let params = PetitionParams {
        petition_text: config.petition_text.clone(),
        petition_id,
        group: G::desc(),
        public_key: ceremony.public.p,
        fragment_publics: ceremony.public.fragment_publics,
        n: config.n,
        k: config.k,
        t: config.t,
        v: config.v,
        expiry: config.expiry,
        thresholds: config.thresholds.clone(),
        validators: config.validators.clone(),
        hash_generator,
        hash_key_commitment: hash_keys[0].commitment.clone(),
        hybrid_alg: HYBRID_ALG_NAME.to_string(),
    };
    params.validate()?;
    Ok(PetitionSetup {
        params,
        transcript: ceremony.transcript,
        stores: ceremony.stores,
        hash_keys,
        triples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dkg::verify_ceremony;
    use crate::group::{Ristretto255, ToyGroup};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn honest_setup_passes_audit() {
        let config = PetitionConfig::new("text", 3, 3, 2, 1);
        for seed in 0..20 {
            let s = create_petition::<ToyGroup, _>(&config, 4, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap();
            let report = verify_ceremony(&s.params, &s.transcript);
            assert!(report.ok, "{:?}", report.problems);
            assert_eq!(s.triples.len(), 4);
        }
        let s = create_petition::<Ristretto255, _>(&config, 1, &mut ChaCha20Rng::seed_from_u64(0)).unwrap();
        assert!(verify_ceremony(&s.params, &s.transcript).ok);
    }

    #[test]
    fn same_seed_same_petition() {
        let config = PetitionConfig::new("text", 2, 3, 2, 1);
        let a = create_petition::<ToyGroup, _>(&config, 2, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        let b = create_petition::<ToyGroup, _>(&config, 2, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.stores, b.stores);
    }

    #[test]
    fn rejects_bad_config() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let config = PetitionConfig::new("text", 3, 3, 4, 1);
        assert!(create_petition::<ToyGroup, _>(&config, 1, &mut rng).is_err());
        let mut config = PetitionConfig::new("text", 3, 3, 2, 1);
        config.thresholds = Some(vec![2, 1]);
        assert!(create_petition::<ToyGroup, _>(&config, 1, &mut rng).is_err());
    }

    #[test]
    fn tampered_headers_fail_audit() {
        let config = PetitionConfig::new("text", 3, 3, 2, 1);
        let s = create_petition::<ToyGroup, _>(&config, 1, &mut ChaCha20Rng::seed_from_u64(2)).unwrap();
        let mut forged = s.params.clone();
        forged.fragment_publics[1] = ToyGroup::mul(&forged.fragment_publics[1], &ToyGroup::generator());
        assert!(!verify_ceremony(&forged, &s.transcript).ok);
        let mut short = s.transcript.clone();
        short.pop();
        assert!(!verify_ceremony(&s.params, &short).ok);
    }
}
