// Types for the session wire protocol (version 1).
// Mirrors docs/wire_protocol.md on the server side.

export type Role = 'alice' | 'bob'

export type MessageKind =
  | 'state_broadcast'
  | 'timer'
  | 'prompt_view'
  | 'say'
  | 'verdict'
  | 'episode_end'

export type SessionMessage = {
  v: number
  seq: number
  kind: MessageKind
  session_id: string
  agent_id: Role | null
  payload: Record<string, unknown>
}

export type PaletteFunction = {
  name: string
  arity: number
  arg_options: string[][]
}

export type Palette = {
  functions: PaletteFunction[]
  requestable: string[]
}

export type WorldSnapshot = {
  timestep: number
  time_limit: number
  order: string
  delivered: boolean
  delivered_correct: boolean
  agents: Record<string, { holding: string | null; pending_plan: string[] }>
  elements: Record<
    string,
    {
      kind: string
      owner: string
      utensil_type: string
      contents: string[]
      inventory: string[]
      processing: { action: string; output: string; remaining: number } | null
    }
  >
}

export type SessionView = {
  session_id: string
  role: Role
  status: 'waiting' | 'running' | 'finished' | 'failed' | 'closed'
  task: string
  level: number
  order: string
  recipe: string | null
  scene: number
  deadline_epoch_ms: number | null
  step_limit_ms: number | null
  observation: string
  world: WorldSnapshot
  transcript: SessionMessage[]
  palette: Palette
}

export type SubmitVerdict = {
  accepted: boolean
  error?: string
}

export type SessionSummary = {
  session_id: string
  task: string
  level: number
  status: string
  roles: Record<Role, string>
  claimed: Role[]
  step_limit_ms: number | null
}
