//! Random-waypoint mobility and scripted placements.

use rand::Rng;

use super::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arena {
    pub width: f64,
    pub height: f64,
}

impl Arena {
    pub fn contains(&self, p: Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Position {
        Position::new(rng.random_range(0.0..=self.width), rng.random_range(0.0..=self.height))
    }
}

/// One node's piecewise-linear trajectory.
///
/// The node rests at `from` until `depart`, moves in a straight line to
/// `to`, arriving at `arrive`, then pauses again. Nodes start paused.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    from: Position,
    to: Position,
    depart: SimTime,
    arrive: SimTime,
    speed: f64,
    pause: SimTime,
}

impl Trajectory {
    pub fn new(start: Position, speed: f64, pause: SimTime) -> Self {
        Trajectory {
            from: start,
            to: start,
            depart: pause,
            arrive: pause,
            speed: speed.max(0.0),
            pause,
        }
    }

    /// A node that never moves.
    pub fn fixed(at: Position) -> Self {
        Trajectory {
            from: at,
            to: at,
            depart: SimTime::MAX,
            arrive: SimTime::MAX,
            speed: 0.0,
            pause: SimTime::MAX,
        }
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn waypoint(&self) -> Position {
        self.to
    }

    fn moving(&self) -> bool {
        self.depart < self.arrive
    }

    /// Time of the next leg boundary: the arrival while moving, the end of
    /// the pause otherwise.
    pub fn next_change(&self) -> Option<SimTime> {
        if self.speed <= 0.0 {
            return None;
        }
        let t = if self.moving() { self.arrive } else { self.depart };
        (t != SimTime::MAX).then_some(t)
    }

    pub fn position_at(&self, t: SimTime) -> Position {
        if t <= self.depart || self.arrive <= self.depart {
            return if t >= self.arrive { self.to } else { self.from };
        }
        if t >= self.arrive {
            return self.to;
        }
        let span = (self.arrive - self.depart).as_nanos() as f64;
        let frac = (t - self.depart).as_nanos() as f64 / span;
        Position::new(
            self.from.x + (self.to.x - self.from.x) * frac,
            self.from.y + (self.to.y - self.from.y) * frac,
        )
    }

    /// Advances the trajectory at `now`: an arriving node pauses, a node
    /// whose pause has ended draws a uniform waypoint.
    pub fn advance(&mut self, now: SimTime, arena: &Arena, rng: &mut impl Rng) {
        if self.speed <= 0.0 {
            return;
        }
        if self.moving() {
            if now < self.arrive {
                return;
            }
            self.from = self.to;
            self.depart = now + self.pause;
            self.arrive = self.depart;
            if self.pause > SimTime::ZERO {
                return;
            }
        } else if now < self.depart {
            return;
        }
        let here = self.from;
        let target = arena.sample(rng);
        let travel = SimTime::from_secs_f64(here.distance(&target) / self.speed);
        self.to = target;
        self.depart = now;
        self.arrive = now + travel.max(SimTime::from_nanos(1));
    }

    /// Moves a scripted node instantly.
    pub fn teleport(&mut self, to: Position) {
        *self = Trajectory::fixed(to);
    }
}

/// Position of a random-waypoint node at time `t`.
pub fn rwp_position(trajectory: &Trajectory, t: SimTime) -> Position {
    trajectory.position_at(t)
}
