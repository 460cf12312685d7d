//! Seeded generator for the actor / movie / company database.
//!
//! The physical schema has five relations: `Actor`, `Movie`, `Company` and
//! the two many-to-many link tables `Stars` and `Produces`. Link tables carry a
//! surrogate `id` so every table has a single-column primary key.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Zipf;
use serde::{Deserialize, Serialize};

use super::{fnv1a, mix64, ColumnData, DataType, Database, Table, TableDef};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub n_actors: usize,
    pub n_movies: usize,
    pub n_companies: usize,
    pub stars_per_movie: usize,
    pub companies_per_movie: usize,
    /// Zipf exponent for actor and company popularity; 0 is uniform.
    pub skew: f64,
    /// Probability of ratings 1 through 5.
    pub rating_distribution: [f64; 5],
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 1,
            n_actors: 100_000,
            n_movies: 100_000,
            n_companies: 1_000,
            stars_per_movie: 5,
            companies_per_movie: 1,
            skew: 1.0,
            rating_distribution: [0.2; 5],
        }
    }
}

impl GenConfig {
    /// A small database for oracle tests.
    pub fn tiny(seed: u64) -> Self {
        GenConfig {
            seed,
            n_actors: 30,
            n_movies: 40,
            n_companies: 6,
            stars_per_movie: 3,
            companies_per_movie: 2,
            skew: 1.0,
            rating_distribution: [0.2; 5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("n_actors", self.n_actors),
            ("n_movies", self.n_movies),
            ("n_companies", self.n_companies),
            ("stars_per_movie", self.stars_per_movie),
            ("companies_per_movie", self.companies_per_movie),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.stars_per_movie > self.n_actors {
            return Err(Error::config("stars_per_movie", "cannot exceed n_actors"));
        }
        if self.companies_per_movie > self.n_companies {
            return Err(Error::config(
                "companies_per_movie",
                "cannot exceed n_companies",
            ));
        }
        if !(self.skew.is_finite() && self.skew >= 0.0) {
            return Err(Error::config("skew", "must be a finite value >= 0"));
        }
        if self
            .rating_distribution
            .iter()
            .any(|p| !(p.is_finite() && *p >= 0.0))
        {
            return Err(Error::config(
                "rating_distribution",
                "probabilities must be >= 0",
            ));
        }
        let total: f64 = self.rating_distribution.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "rating_distribution",
                format!("probabilities sum to {total}, expected 1"),
            ));
        }
        if self.n_movies > u32::MAX as usize {
            return Err(Error::config("n_movies", "movie ids must fit in 32 bits"));
        }
        Ok(())
    }
}

pub(crate) fn table_rng(seed: u64, table: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(seed ^ fnv1a(&[table.as_bytes()])))
}

/// Draws `per_row` distinct entity ids for each of `rows` parents, with
/// Zipf-distributed popularity (id 0 most popular).
fn zipf_links(
    rng: &mut ChaCha8Rng,
    n_entities: usize,
    rows: usize,
    per_row: usize,
    skew: f64,
) -> Vec<(i64, i64)> {
    let zipf = Zipf::new(n_entities as f64, skew).expect("validated");
    let mut links = Vec::with_capacity(rows * per_row);
    let mut chosen: Vec<i64> = Vec::with_capacity(per_row);
    for parent in 0..rows {
        chosen.clear();
        while chosen.len() < per_row {
            let mut pick = None;
            for _ in 0..100 {
                let id = zipf.sample(rng) as i64 - 1;
                if !chosen.contains(&id) {
                    pick = Some(id);
                    break;
                }
            }
            // heavy skew on a small domain: fall back to the lowest unused id
            let id = pick.unwrap_or_else(|| (0..).find(|i| !chosen.contains(i)).unwrap());
            chosen.push(id);
        }
        chosen.sort_unstable();
        links.extend(chosen.iter().map(|&e| (e, parent as i64)));
    }
    links
}

fn entity_table(name: &str, prefix: &str, n: usize) -> Result<Table> {
    let ids: Vec<i64> = (0..n as i64).collect();
    let names: Vec<String> = (0..n).map(|i| format!("{prefix}_{i}")).collect();
    Table::new(
        TableDef::new(
            name,
            &[("id", DataType::Int64), ("name", DataType::String)],
            "id",
            &["id", "name"],
        ),
        vec![ColumnData::Int64(ids), ColumnData::from_strings(&names)],
    )
}

fn link_table(name: &str, entity_col: &str, links: Vec<(i64, i64)>) -> Result<Table> {
    let ids: Vec<i64> = (0..links.len() as i64).collect();
    let (ents, movies): (Vec<i64>, Vec<i64>) = links.into_iter().unzip();
    Table::new(
        TableDef::new(
            name,
            &[
                ("id", DataType::Int64),
                (entity_col, DataType::Int64),
                ("movie_id", DataType::Int64),
            ],
            "id",
            &[entity_col, "movie_id"],
        ),
        vec![
            ColumnData::Int64(ids),
            ColumnData::Int64(ents),
            ColumnData::Int64(movies),
        ],
    )
}

/// Generates the five-relation movie database. Pure function of `cfg`.
pub fn generate_movie_db(cfg: &GenConfig) -> Result<Database> {
    cfg.validate()?;

    let actor = entity_table("Actor", "actor", cfg.n_actors)?;
    let company = entity_table("Company", "company", cfg.n_companies)?;

    let mut rng = table_rng(cfg.seed, "Movie");
    let ratings_dist = WeightedIndex::new(cfg.rating_distribution)
        .map_err(|e| Error::config("rating_distribution", e.to_string()))?;
    let ratings: Vec<i64> = (0..cfg.n_movies)
        .map(|_| ratings_dist.sample(&mut rng) as i64 + 1)
        .collect();
    let titles: Vec<String> = (0..cfg.n_movies).map(|i| format!("movie_{i}")).collect();
    let movie = Table::new(
        TableDef::new(
            "Movie",
            &[
                ("id", DataType::Int64),
                ("title", DataType::String),
                ("rating", DataType::Int64),
            ],
            "id",
            &["id"],
        ),
        vec![
            ColumnData::Int64((0..cfg.n_movies as i64).collect()),
            ColumnData::from_strings(&titles),
            ColumnData::Int64(ratings),
        ],
    )?;

    let mut rng = table_rng(cfg.seed, "Stars");
    let stars = link_table(
        "Stars",
        "actor_id",
        zipf_links(
            &mut rng,
            cfg.n_actors,
            cfg.n_movies,
            cfg.stars_per_movie,
            cfg.skew,
        ),
    )?;
    let mut rng = table_rng(cfg.seed, "Produces");
    let produces = link_table(
        "Produces",
        "company_id",
        zipf_links(
            &mut rng,
            cfg.n_companies,
            cfg.n_movies,
            cfg.companies_per_movie,
            cfg.skew,
        ),
    )?;

    Database::new(vec![actor, movie, company, stars, produces], cfg.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_of_each() -> GenConfig {
        GenConfig {
            seed: 1,
            n_actors: 1,
            n_movies: 1,
            n_companies: 1,
            stars_per_movie: 1,
            companies_per_movie: 1,
            skew: 1.0,
            rating_distribution: [0.2; 5],
        }
    }

    #[test]
    fn degenerate_sizes_force_single_edge() {
        let db = generate_movie_db(&one_of_each()).unwrap();
        let stars = db.table("Stars").unwrap();
        assert_eq!(stars.row_count(), 1);
        assert_eq!(stars.column("actor_id").unwrap().as_i64().unwrap(), &[0]);
        assert_eq!(stars.column("movie_id").unwrap().as_i64().unwrap(), &[0]);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_movie_db(&GenConfig::tiny(3)).unwrap();
        let b = generate_movie_db(&GenConfig::tiny(3)).unwrap();
        for (ta, tb) in a.tables().iter().zip(b.tables()) {
            assert_eq!(ta.def, tb.def);
            assert_eq!(ta.columns(), tb.columns());
        }
        let c = generate_movie_db(&GenConfig::tiny(4)).unwrap();
        assert_ne!(
            a.table("Stars").unwrap().columns(),
            c.table("Stars").unwrap().columns()
        );
    }

    #[test]
    fn link_tables_have_expected_sizes_and_valid_keys() {
        let cfg = GenConfig::tiny(9);
        let db = generate_movie_db(&cfg).unwrap();
        let stars = db.table("Stars").unwrap();
        assert_eq!(stars.row_count(), cfg.n_movies * cfg.stars_per_movie);
        let produces = db.table("Produces").unwrap();
        assert_eq!(produces.row_count(), cfg.n_movies * cfg.companies_per_movie);
        let actors = stars.column("actor_id").unwrap().as_i64().unwrap();
        assert!(actors
            .iter()
            .all(|&a| (0..cfg.n_actors as i64).contains(&a)));
        let companies = produces.column("company_id").unwrap().as_i64().unwrap();
        assert!(companies
            .iter()
            .all(|&c| (0..cfg.n_companies as i64).contains(&c)));
        // no duplicate (actor, movie) pairs
        let movies = stars.column("movie_id").unwrap().as_i64().unwrap();
        let mut pairs: Vec<_> = actors.iter().zip(movies).collect();
        pairs.sort();
        pairs.dedup();
        assert_eq!(pairs.len(), stars.row_count());
    }

    #[test]
    fn skew_concentrates_popularity_on_low_ids() {
        let cfg = GenConfig {
            n_actors: 200,
            n_movies: 2000,
            stars_per_movie: 2,
            skew: 1.2,
            ..GenConfig::tiny(5)
        };
        let db = generate_movie_db(&cfg).unwrap();
        let actors = db
            .table("Stars")
            .unwrap()
            .column("actor_id")
            .unwrap()
            .as_i64()
            .unwrap()
            .to_vec();
        let head = actors.iter().filter(|&&a| a < 10).count();
        let tail = actors.iter().filter(|&&a| a >= 190).count();
        assert!(head > 10 * tail.max(1), "head {head} tail {tail}");
    }

    #[test]
    fn rating_counts_within_multinomial_bound() {
        // Multinomial(1000, 0.2): mean 200, sd sqrt(1000 * 0.2 * 0.8) = 12.65
        let cfg = GenConfig {
            seed: 7,
            n_movies: 1000,
            ..GenConfig::tiny(7)
        };
        let db = generate_movie_db(&cfg).unwrap();
        let ratings = db
            .table("Movie")
            .unwrap()
            .column("rating")
            .unwrap()
            .as_i64()
            .unwrap()
            .to_vec();
        let sd = (1000.0f64 * 0.2 * 0.8).sqrt();
        for r in 1..=5 {
            let n = ratings.iter().filter(|&&x| x == r).count() as f64;
            assert!((n - 200.0).abs() <= 5.0 * sd, "rating {r}: {n}");
        }
    }

    #[test]
    fn invalid_config_names_field() {
        let mut cfg = GenConfig::tiny(1);
        cfg.n_companies = 0;
        let err = generate_movie_db(&cfg).unwrap_err().to_string();
        assert!(err.contains("n_companies"), "{err}");

        let mut cfg = GenConfig::tiny(1);
        cfg.rating_distribution = [0.5, 0.5, 0.5, 0.0, 0.0];
        let err = generate_movie_db(&cfg).unwrap_err().to_string();
        assert!(err.contains("rating_distribution"), "{err}");

        let mut cfg = GenConfig::tiny(1);
        cfg.stars_per_movie = cfg.n_actors + 1;
        assert!(generate_movie_db(&cfg).is_err());
    }
}
