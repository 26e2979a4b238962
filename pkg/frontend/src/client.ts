// Session client: join a live session, follow the message stream and
// submit plans before the scene deadline. Server-authoritative: state
// renders only from server messages, never optimistically.

import type { Role, SessionMessage, SessionView, SubmitVerdict } from './protocol'
import { canSubmit, makeCountdown } from './countdown'

export type Transport = {
  request(method: string, path: string, body?: unknown): Promise<unknown>
}

export function httpTransport(baseUrl: string, fetchFn: typeof fetch = fetch): Transport {
  const base = baseUrl.replace(/\/$/, '')
  return {
    async request(method: string, path: string, body?: unknown): Promise<unknown> {
      const response = await fetchFn(base + path, {
        method,
        headers: { 'Content-Type': 'application/json' },
        body: body === undefined ? undefined : JSON.stringify(body),
      })
      const doc = await response.json()
      if (!response.ok) {
        throw new Error(String((doc as { error?: string }).error ?? response.status))
      }
      return doc
    },
  }
}

export type ClientEvents = {
  onMessage?: (message: SessionMessage) => void
  onStatusChange?: (status: string) => void
  onEnd?: (payload: Record<string, unknown>) => void
}

export class SessionClient {
  readonly sessionId: string
  readonly role: Role
  private transport: Transport
  private events: ClientEvents
  private since = 0
  private stopped = false
  messages: SessionMessage[] = []
  deadlineEpochMs: number | null = null
  currentScene = 0
  safetyMs: number

  constructor(
    transport: Transport,
    sessionId: string,
    role: Role,
    events: ClientEvents = {},
    safetyMs = 250,
  ) {
    this.transport = transport
    this.sessionId = sessionId
    this.role = role
    this.events = events
    this.safetyMs = safetyMs
  }

  static async create(
    transport: Transport,
    options: {
      task: string
      role: Role
      /** Backend kind or full backend config for the other role. */
      teammate?: string | Record<string, unknown>
      stepLimitSeconds?: number | null
      stepLimitMs?: number | null
      gamma?: number
    },
    events: ClientEvents = {},
  ): Promise<SessionClient> {
    const roles: Record<string, unknown> = {
      [options.role]: 'human',
      [options.role === 'alice' ? 'bob' : 'alice']: options.teammate ?? 'rat_follower',
    }
    const body: Record<string, unknown> = { task: options.task, roles }
    if (options.gamma !== undefined) body['gamma'] = options.gamma
    if (options.stepLimitMs != null) body['step_limit_ms'] = options.stepLimitMs
    else if (options.stepLimitSeconds !== undefined) body['step_limit_seconds'] = options.stepLimitSeconds
    const doc = (await transport.request('POST', '/sessions', body)) as { session_id: string }
    const client = new SessionClient(transport, doc.session_id, options.role, events)
    await client.join()
    return client
  }

  async join(): Promise<SessionView> {
    const doc = (await this.transport.request('POST', `/sessions/${this.sessionId}/join`, {
      role: this.role,
    })) as { view: SessionView }
    return doc.view
  }

  async view(): Promise<SessionView> {
    return (await this.transport.request(
      'GET',
      `/sessions/${this.sessionId}/view?role=${this.role}`,
    )) as SessionView
  }

  /** One long-poll turn; returns the freshly received messages.
   *  Polling is role-scoped, so the server withholds the other agent's
   *  prompt views (which would leak knowledge this role must not have). */
  async pollOnce(timeoutSeconds = 5): Promise<SessionMessage[]> {
    const doc = (await this.transport.request(
      'GET',
      `/sessions/${this.sessionId}/messages?since=${this.since}&timeout=${timeoutSeconds}&role=${this.role}`,
    )) as { messages: SessionMessage[]; next_since: number }
    this.since = doc.next_since
    for (const message of doc.messages) {
      this.ingest(message)
    }
    return doc.messages
  }

  private ingest(message: SessionMessage): void {
    this.messages.push(message)
    if (message.kind === 'timer' || message.kind === 'prompt_view') {
      const deadline = message.payload['deadline_epoch_ms']
      this.deadlineEpochMs = deadline == null ? null : Number(deadline)
      this.currentScene = Number(message.payload['scene'] ?? this.currentScene)
    }
    if (message.kind === 'state_broadcast') {
      this.currentScene = Number(message.payload['scene'] ?? this.currentScene)
    }
    this.events.onMessage?.(message)
    if (message.kind === 'episode_end') {
      this.stopped = true
      this.events.onEnd?.(message.payload)
    }
  }

  /** Poll until the episode ends or `stop()` is called. Reconnects with
   *  backoff on transport errors; the `since` cursor makes resume lossless. */
  async run(timeoutSeconds = 5): Promise<void> {
    let backoffMs = 200
    while (!this.stopped) {
      try {
        await this.pollOnce(timeoutSeconds)
        backoffMs = 200
      } catch {
        await new Promise((resolve) => setTimeout(resolve, backoffMs))
        backoffMs = Math.min(backoffMs * 2, 5000)
      }
    }
  }

  stop(): void {
    this.stopped = true
  }

  /** True while the countdown still allows a submission for this scene. */
  inputEnabled(nowMs: number = Date.now()): boolean {
    return canSubmit(makeCountdown(this.deadlineEpochMs, this.safetyMs), nowMs)
  }

  /** Submit a plan (and optional say) for the current scene.
   *  After the local deadline lockout this throws without touching the
   *  server; the server would reject it anyway and log a violation. */
  async submitPlan(plan: string, say = '', nowMs: number = Date.now()): Promise<SubmitVerdict> {
    if (!this.inputEnabled(nowMs)) {
      throw new Error('input locked: the scene deadline has passed')
    }
    return (await this.transport.request('POST', `/sessions/${this.sessionId}/submit`, {
      role: this.role,
      kind: 'plan',
      scene: this.currentScene,
      plan,
      say,
    })) as SubmitVerdict
  }

  async submitSay(text: string, nowMs: number = Date.now()): Promise<SubmitVerdict> {
    return this.submitPlan('', text, nowMs)
  }
}
